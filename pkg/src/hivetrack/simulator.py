"""Synthetic hive-entrance traffic with exact ground truth.

Each bee walks a piecewise-linear path at constant speed: it enters at the
top or bottom edge (or appears on the deck), optionally loiters on the deck,
and leaves through an edge or vanishes where it stands.  Ground-truth status
is replayed from the noiseless midpoints with the same trigger-line rules
the tracker uses, so the output doubles as an oracle for the tracker.

Randomness comes from independent child streams of one seed: paths, pixel
jitter and detection dropout never share a generator, so raising
``dropout_prob`` drops a superset of the detections dropped at a lower
value while paths stay identical.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_probability, check_range, check_scalar
from .analytics import VideoSummary
from .exceptions import InvalidInputError
from .geometry import DetectionBox, HiveGeometry, bee_size_mm, crossing
from .streamio import GroundTruthRecord, SecondaryClass, SecondaryDetection
from .tracker import STATUS_AFTER, FrameDetections, TrackStatus

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimConfig:
    geom: HiveGeometry = field(default_factory=HiveGeometry)
    fps: float = 10.0
    duration_s: float = 60.0
    n_bees: int = 20
    speed_px_per_frame: tuple = (4.0, 20.0)
    # entry side probabilities: top edge, bottom edge, deck
    spawn_probs: tuple = (0.4, 0.4, 0.2)
    turnback_prob: float = 0.15
    loiter_prob: float = 0.3
    loiter_frames: tuple = (5, 30)
    deck_vanish_prob: float = 0.3
    jitter_px: float = 1.5
    dropout_prob: float = 0.02
    worker_len_mm: tuple = (11.0, 13.0)
    drone_len_mm: tuple = (15.0, 17.0)
    drone_ratio: float = 0.1
    aspect: tuple = (0.35, 0.5)
    pollen_prob: float = 0.1
    mite_prob: float = 0.02
    # midpoints of distinct bees stay farther apart than this, also across
    # adjacent frames; 0 disables the check
    min_separation_px: float = 0.0
    max_attempts: int = 200
    seed: int = 0

    def __post_init__(self):
        check_scalar(self.fps, "fps", min_val=0.0, include_min=False)
        check_scalar(self.duration_s, "duration_s", min_val=0.0)
        check_scalar(self.n_bees, "n_bees", min_val=0, integral=True)
        check_range(self.speed_px_per_frame, "speed_px_per_frame")
        if self.speed_px_per_frame[1] <= 0:
            raise InvalidInputError("speed_px_per_frame must allow positive speeds")
        probs = [check_probability(p, "spawn_probs") for p in self.spawn_probs]
        if len(probs) != 3 or not math.isclose(sum(probs), 1.0, abs_tol=1e-9):
            raise InvalidInputError("spawn_probs must be three probabilities summing to 1")
        for name in ("turnback_prob", "loiter_prob", "deck_vanish_prob", "dropout_prob",
                     "drone_ratio", "pollen_prob", "mite_prob"):
            check_probability(getattr(self, name), name)
        for name in ("loiter_frames", "worker_len_mm", "drone_len_mm", "aspect"):
            check_range(getattr(self, name), name)
        check_scalar(self.jitter_px, "jitter_px", min_val=0.0)
        check_scalar(self.min_separation_px, "min_separation_px", min_val=0.0)
        check_scalar(self.max_attempts, "max_attempts", min_val=1, integral=True)
        check_scalar(self.seed, "seed", min_val=0, integral=True)

    @property
    def n_frames(self):
        return int(round(self.fps * self.duration_s))

    @classmethod
    def ideal(cls, **overrides):
        """Noise-free regime in which tracking must be exact: no jitter or
        dropout, per-frame speed under half the match radius and bees kept
        more than one match radius apart."""
        geom = overrides.get("geom", HiveGeometry())
        params = dict(jitter_px=0.0, dropout_prob=0.0,
                      speed_px_per_frame=(3.0, 0.4 * geom.match_tolerance),
                      min_separation_px=geom.match_tolerance)
        params.update(overrides)
        return cls(**params)


@dataclass
class _Bee:
    start: int
    raw: np.ndarray         # unclipped body centres, one row per visible frame
    path: np.ndarray        # midpoints of the clipped boxes
    length_px: float
    width_px: float
    pollen: bool
    mite: bool


def _walk(points, speed, loiter_at=None, loiter_frames=0):
    """Positions along ``points`` spaced at most ``speed`` apart."""
    out = [np.asarray(points[0], dtype=float)]
    for i, (a, b) in enumerate(zip(points[:-1], points[1:])):
        a, b = np.asarray(a, float), np.asarray(b, float)
        steps = max(1, math.ceil(np.hypot(*(b - a)) / speed))
        t = np.arange(1, steps + 1)[:, None] / steps
        out.extend(a + (b - a) * t)
        if loiter_at == i + 1:
            out.extend([b] * loiter_frames)
    return np.vstack(out)


def _clip(cx, cy, length, width, geom):
    """Noiseless box around a midpoint, clipped to the frame."""
    return (min(max(cx - width / 2, 0.0), geom.frame_w),
            min(max(cy - length / 2, 0.0), geom.frame_h),
            min(max(cx + width / 2, 0.0), geom.frame_w),
            min(max(cy + length / 2, 0.0), geom.frame_h))


def _box_mid(box):
    return ((box[2] - box[0]) / 2 + box[0], (box[3] - box[1]) / 2 + box[1])


def _draw_bee(cfg, rng, n_frames):
    g = cfg.geom
    margin = min(40.0, g.frame_w / 4)

    def x():
        return rng.uniform(margin, g.frame_w - margin)

    def deck_y():
        pad = min(10.0, (g.leave_line - g.arrive_line) / 4)
        return rng.uniform(g.arrive_line + pad, g.leave_line - pad)

    side = rng.choice(3, p=np.asarray(cfg.spawn_probs, float))
    loiter = rng.random() < cfg.loiter_prob
    n_loiter = int(rng.integers(int(cfg.loiter_frames[0]), int(cfg.loiter_frames[1]) + 1))
    if side < 2:
        start_y = 0.0 if side == 0 else g.frame_h
        turnback = rng.random() < cfg.turnback_prob
        end_y = start_y if turnback else g.frame_h - start_y
        points = [(x(), start_y)]
        if loiter or turnback:
            points.append((x(), deck_y()))
        points.append((x(), end_y))
        loiter_at = 1 if loiter else None
    else:
        points = [(x(), deck_y())]
        if rng.random() < cfg.deck_vanish_prob:
            points.append((x(), deck_y()))
        else:
            points.append((x(), float(rng.choice([0.0, g.frame_h]))))
        loiter_at = 0 if loiter else None

    speed = rng.uniform(*cfg.speed_px_per_frame)
    if loiter_at == 0:
        path = np.vstack([np.repeat([points[0]], n_loiter, axis=0),
                          _walk(points, speed)[1:]])
    else:
        path = _walk(points, speed, loiter_at, n_loiter)

    drone = rng.random() < cfg.drone_ratio
    length_mm = rng.uniform(*(cfg.drone_len_mm if drone else cfg.worker_len_mm))
    length = length_mm * g.px_per_mm_y
    width = length_mm * rng.uniform(*cfg.aspect) * g.px_per_mm_x
    start = int(rng.integers(0, max(n_frames, 1)))
    path = path[:max(n_frames - start, 0)]
    # midpoints after clipping are what a detector would report
    mids = np.array([_box_mid(_clip(cx, cy, length, width, g)) for cx, cy in path]).reshape(-1, 2)
    return _Bee(start, path, mids, length, width,
                rng.random() < cfg.pollen_prob, rng.random() < cfg.mite_prob)


def _conflicts(bee, placed, sep):
    s0, s1 = bee.start, bee.start + len(bee.path)
    for other in placed:
        o0, o1 = other.start, other.start + len(other.path)
        if o1 + 1 < s0 or s1 + 1 < o0:
            continue
        for shift in (-1, 0, 1):
            # bee at frame t vs other at frame t + shift
            lo, hi = max(s0, o0 - shift), min(s1, o1 - shift)
            if lo >= hi:
                continue
            a = bee.path[lo - s0:hi - s0]
            b = other.path[lo + shift - o0:hi + shift - o0]
            if np.any(np.hypot(*(a - b).T) <= sep):
                return True
    return False


def _truth(bee_id, bee, cfg):
    status = TrackStatus.NEW
    size = None
    crossings = []
    for t in range(1, len(bee.path)):
        event = crossing(bee.path[t - 1, 1], bee.path[t, 1], cfg.geom)
        if event:
            status = STATUS_AFTER[event]
            frame = bee.start + t
            if size is None:
                cx, cy = bee.raw[t]
                box = DetectionBox(*_clip(cx, cy, bee.length_px, bee.width_px, cfg.geom))
                size = bee_size_mm(box, cfg.geom)
            crossings.append(frame)
    has_snapshot = bool(crossings)
    record = GroundTruthRecord(bee_id, status, bee.start, bee.start + len(bee.path) - 1,
                               bee.pollen and has_snapshot, bee.mite and has_snapshot, size)
    return record, crossings


def generate(config, with_secondary=False):
    """Simulate one video.

    Returns ``(frames, truth)``: a list of :class:`FrameDetections` covering
    every frame index (possibly empty) and one ground-truth record per bee,
    ids in spawn order.  With ``with_secondary=True`` a third element lists
    pollen/mite detections on each pollen or mite bee's true crossing
    snapshots, keyed by ``(bee_id, frame_index)``.
    """
    cfg = config
    root = np.random.SeedSequence(cfg.seed)
    path_rng, jitter_rng, drop_rng, sec_rng = (np.random.default_rng(s) for s in root.spawn(4))
    n_frames = cfg.n_frames

    placed = []
    for _ in range(cfg.n_bees):
        for _attempt in range(cfg.max_attempts):
            bee = _draw_bee(cfg, path_rng, n_frames)
            if len(bee.path) == 0:
                continue
            if cfg.min_separation_px > 0 and _conflicts(bee, placed, cfg.min_separation_px):
                continue
            placed.append(bee)
            break
        else:
            logger.warning("could not place a bee after %d attempts", cfg.max_attempts)

    placed.sort(key=lambda b: b.start)
    jitter = jitter_rng.normal(0.0, 1.0, size=(len(placed), n_frames, 2))
    dropped = drop_rng.random(size=(len(placed), n_frames)) < cfg.dropout_prob

    per_frame = [[] for _ in range(n_frames)]
    truth, secondary = [], []
    for i, bee in enumerate(placed):
        record, crossings = _truth(i + 1, bee, cfg)
        truth.append(record)
        for t, (cx, cy) in enumerate(bee.raw):
            frame = bee.start + t
            if dropped[i, frame]:
                continue
            if cfg.jitter_px > 0:
                cx += cfg.jitter_px * jitter[i, frame, 0]
                cy += cfg.jitter_px * jitter[i, frame, 1]
            per_frame[frame].append(DetectionBox(
                *_clip(cx, cy, bee.length_px, bee.width_px, cfg.geom), confidence=0.9))
        for frame in crossings:
            for flag, cls in ((record.has_pollen, SecondaryClass.POLLEN),
                              (record.has_mite, SecondaryClass.MITE)):
                if flag:
                    secondary.append(SecondaryDetection(
                        (record.bee_id, frame), cls, float(sec_rng.uniform(0.5, 1.0)),
                        DetectionBox(2.0, 2.0, 8.0, 8.0)))

    frames = [FrameDetections(t, tuple(boxes)) for t, boxes in enumerate(per_frame)]
    if with_secondary:
        return frames, truth, secondary
    return frames, truth


def truth_summary(truth):
    """Summarize ground truth with the same bucketing as the tracker."""
    counts = {status: 0 for status in TrackStatus}
    sizes = []
    for record in truth:
        counts[record.final_status] += 1
        if record.size_mm is not None:
            sizes.append(record.size_mm)
    return VideoSummary(
        arriving=counts[TrackStatus.ARRIVING],
        leaving=counts[TrackStatus.LEAVING],
        deck=counts[TrackStatus.DECK],
        new=counts[TrackStatus.NEW],
        pollen_tracks=sum(1 for r in truth if r.has_pollen),
        mite_tracks=sum(1 for r in truth if r.has_mite),
        mean_size_mm=math.fsum(sizes) / len(sizes) if sizes else None,
        total_tracks=len(truth),
    )

