"""Scoring the tracker against manual counts.

Count accuracy compares how many bees each side labelled Arriving and
Leaving; pollen scoring uses precision, recall and F1 over bees carrying
pollen.  True positives are taken as ``manual - false_negatives``.  Averages
are computed from full-precision per-video values.
"""
import csv
import io
import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional

from ._validation import check_scalar
from .exceptions import InvalidInputError, UndefinedMetricError
from .tracker import TrackStatus


@dataclass(frozen=True)
class CountPair:
    manual: int
    algorithm: int

    def __post_init__(self):
        for name in ("manual", "algorithm"):
            object.__setattr__(self, name, check_scalar(
                getattr(self, name), name, min_val=0, integral=True))


@dataclass(frozen=True)
class VideoCounts:
    label: str
    arriving: CountPair
    leaving: CountPair


@dataclass(frozen=True)
class PollenVideoCounts:
    manual_pollen: int
    algorithm_pollen: int
    false_pos: int
    false_neg: int
    total_bees: int = 0
    label: str = ""

    def __post_init__(self):
        for name in ("manual_pollen", "algorithm_pollen", "false_pos", "false_neg", "total_bees"):
            object.__setattr__(self, name, check_scalar(
                getattr(self, name), name, min_val=0, integral=True))
        if self.false_neg > self.manual_pollen:
            raise InvalidInputError(
                f"false_neg ({self.false_neg}) exceeds manual_pollen ({self.manual_pollen})")

    @property
    def true_pos(self):
        return self.manual_pollen - self.false_neg


class PollenScores(NamedTuple):
    precision: float
    recall: float
    f1: float


def error_rate(p):
    """``|algorithm - manual| / manual``."""
    if p.manual == 0:
        raise UndefinedMetricError("error_rate", "error rate is undefined for a zero manual count")
    return abs(p.algorithm - p.manual) / p.manual


def accuracy(p):
    return max(0.0, 1.0 - error_rate(p))


def video_accuracy(arriving, leaving):
    return (accuracy(arriving) + accuracy(leaving)) / 2


def _video_acc(video):
    if isinstance(video, VideoCounts):
        return video_accuracy(video.arriving, video.leaving)
    if isinstance(video, tuple) and len(video) == 2:
        return video_accuracy(*video)
    return check_scalar(video, "video accuracy", min_val=0.0, max_val=1.0)


def average_accuracy(videos):
    """Mean of per-video accuracies.

    Items may be :class:`VideoCounts`, ``(arriving, leaving)`` pairs of
    :class:`CountPair`, or precomputed accuracies.
    """
    values = [_video_acc(v) for v in videos]
    if not values:
        raise UndefinedMetricError("average_accuracy", "no videos to average")
    return math.fsum(values) / len(values)


def pollen_metrics(v):
    tp = v.true_pos
    if tp + v.false_pos == 0:
        raise UndefinedMetricError("precision")
    if v.manual_pollen == 0:
        raise UndefinedMetricError("recall")
    precision = tp / (tp + v.false_pos)
    recall = tp / v.manual_pollen
    if precision + recall == 0:
        raise UndefinedMetricError("f1")
    return PollenScores(precision, recall, 2 * precision * recall / (precision + recall))


def pollen_averages(videos):
    scores = [pollen_metrics(v) for v in videos]
    if not scores:
        raise UndefinedMetricError("pollen_averages", "no videos to average")
    n = len(scores)
    return PollenScores(*(math.fsum(col) / n for col in zip(*scores)))


@dataclass
class VideoMetrics:
    label: str
    arriving_error: float
    leaving_error: float
    arriving_accuracy: float
    leaving_accuracy: float
    accuracy: float
    pollen_accuracy: Optional[float] = None


@dataclass
class PollenMetrics:
    label: str
    precision: float
    recall: float
    f1: float


@dataclass
class MetricsReport:
    videos: List[VideoMetrics] = field(default_factory=list)
    average_accuracy: Optional[float] = None
    pollen: List[PollenMetrics] = field(default_factory=list)
    average_precision: Optional[float] = None
    average_recall: Optional[float] = None
    average_f1: Optional[float] = None

    def values(self):
        """Every reported number, for range checks."""
        out = []
        for v in self.videos:
            out += [v.arriving_error, v.leaving_error, v.arriving_accuracy,
                    v.leaving_accuracy, v.accuracy]
            if v.pollen_accuracy is not None:
                out.append(v.pollen_accuracy)
        for p in self.pollen:
            out += [p.precision, p.recall, p.f1]
        out += [x for x in (self.average_accuracy, self.average_precision,
                            self.average_recall, self.average_f1) if x is not None]
        return out

    def lines(self, digits=4):
        f = f"{{:.{digits}f}}".format
        out = []
        for v in self.videos:
            out.append(f"video {v.label}: arriving {f(v.arriving_accuracy)}  "
                       f"leaving {f(v.leaving_accuracy)}  accuracy {f(v.accuracy)}")
        if self.average_accuracy is not None:
            out.append(f"average accuracy {f(self.average_accuracy)}")
        for p in self.pollen:
            out.append(f"video {p.label}: precision {f(p.precision)}  "
                       f"recall {f(p.recall)}  f1 {f(p.f1)}")
        if self.average_f1 is not None:
            out.append(f"average precision {f(self.average_precision)}  "
                       f"recall {f(self.average_recall)}  f1 {f(self.average_f1)}")
        return out

    def to_csv(self):
        """Long-format ``scope,metric,value`` table."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("scope", "metric", "value"))
        for v in self.videos:
            for name in ("arriving_error", "leaving_error", "arriving_accuracy",
                         "leaving_accuracy", "accuracy", "pollen_accuracy"):
                value = getattr(v, name)
                if value is not None:
                    w.writerow((v.label, name, repr(value)))
        for p in self.pollen:
            for name in ("precision", "recall", "f1"):
                w.writerow((p.label, name, repr(getattr(p, name))))
        for name in ("average_accuracy", "average_precision", "average_recall", "average_f1"):
            value = getattr(self, name)
            if value is not None:
                w.writerow(("all", name, repr(value)))
        return buf.getvalue()


def _video_metrics(video, pollen_pair=None):
    return VideoMetrics(
        label=video.label,
        arriving_error=error_rate(video.arriving),
        leaving_error=error_rate(video.leaving),
        arriving_accuracy=accuracy(video.arriving),
        leaving_accuracy=accuracy(video.leaving),
        accuracy=video_accuracy(video.arriving, video.leaving),
        pollen_accuracy=None if pollen_pair is None or pollen_pair.manual == 0
        else accuracy(pollen_pair))


def evaluate(videos=(), pollen=()):
    """Build a :class:`MetricsReport` from count tables."""
    report = MetricsReport()
    report.videos = [_video_metrics(v) for v in videos]
    if report.videos:
        report.average_accuracy = math.fsum(v.accuracy for v in report.videos) / len(report.videos)
    for v in pollen:
        s = pollen_metrics(v)
        report.pollen.append(PollenMetrics(v.label, s.precision, s.recall, s.f1))
    if report.pollen:
        avg = pollen_averages(pollen)
        report.average_precision, report.average_recall, report.average_f1 = avg
    return report


def _count(items, status):
    return sum(1 for s in items if s == status)


def _run_accuracy(pair):
    # a direction nobody counted is perfect agreement when the algorithm
    # also reports nothing
    if pair.manual == 0:
        return (0.0 if pair.algorithm == 0 else 1.0), (1.0 if pair.algorithm == 0 else 0.0)
    return error_rate(pair), accuracy(pair)


def compare_runs(truth, profiles, flags=None, label="run"):
    """Score one tracked video against its ground truth.

    ``truth`` holds records with ``final_status`` and ``has_pollen``;
    ``profiles`` are finalized track profiles.  ``flags`` maps profile id to
    ``(pollen, mite)`` and enables the pollen count comparison.  New-status
    bees are ignored.
    """
    truth = list(truth)
    if not truth:
        raise UndefinedMetricError("accuracy", "ground truth is empty")
    manual = [r.final_status for r in truth]
    algo = [p.status for p in profiles]
    arriving = CountPair(_count(manual, TrackStatus.ARRIVING), _count(algo, TrackStatus.ARRIVING))
    leaving = CountPair(_count(manual, TrackStatus.LEAVING), _count(algo, TrackStatus.LEAVING))
    arr_err, arr_acc = _run_accuracy(arriving)
    lea_err, lea_acc = _run_accuracy(leaving)
    pollen_acc = None
    if flags is not None:
        pair = CountPair(sum(1 for r in truth if r.has_pollen),
                         sum(1 for pollen, _ in flags.values() if pollen))
        pollen_acc = _run_accuracy(pair)[1]
    video = VideoMetrics(label, arr_err, lea_err, arr_acc, lea_acc,
                         (arr_acc + lea_acc) / 2, pollen_acc)
    return MetricsReport(videos=[video], average_accuracy=video.accuracy)
