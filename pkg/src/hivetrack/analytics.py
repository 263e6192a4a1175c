"""Per-video aggregation: pollen/mite flags per track and the summary a
hive uploads after each recording."""
import math
from dataclasses import asdict, dataclass
from typing import NamedTuple, Optional

from ._validation import check_probability
from .exceptions import AssociationError, InvalidInputError
from .streamio import SecondaryClass
from .tracker import TrackStatus

DEFAULT_THRESHOLDS = {SecondaryClass.POLLEN: 0.25, SecondaryClass.MITE: 0.25}


class TrackFlags(NamedTuple):
    pollen: bool
    mite: bool


@dataclass(frozen=True)
class VideoSummary:
    arriving: int = 0
    leaving: int = 0
    deck: int = 0
    new: int = 0
    pollen_tracks: int = 0
    mite_tracks: int = 0
    mean_size_mm: Optional[float] = None
    total_tracks: int = 0

    def __post_init__(self):
        counts = (self.arriving, self.leaving, self.deck, self.new,
                  self.pollen_tracks, self.mite_tracks, self.total_tracks)
        if any(c < 0 for c in counts):
            raise InvalidInputError("summary counts must be non-negative")
        if self.arriving + self.leaving + self.deck + self.new != self.total_tracks:
            raise InvalidInputError("status counts do not add up to total_tracks")
        if self.pollen_tracks > self.total_tracks or self.mite_tracks > self.total_tracks:
            raise InvalidInputError("pollen/mite tracks exceed total_tracks")

    @property
    def counted(self):
        """Tracks with a trigger-derived status, i.e. everything but New."""
        return self.arriving + self.leaving + self.deck

    def to_dict(self):
        return asdict(self)


def _thresholds(thresholds):
    merged = dict(DEFAULT_THRESHOLDS)
    for cls, value in (thresholds or {}).items():
        merged[SecondaryClass(cls)] = check_probability(value, f"{cls} threshold")
    return merged


def associate_secondary(profiles, detections, thresholds=None):
    """Flag each profile that has pollen or a mite on any of its snapshots.

    A detection counts when its confidence reaches the threshold of its
    class (``thresholds`` maps class to value, default 0.25 each).  Raises
    :class:`AssociationError` when a detection points at a snapshot no
    profile owns.
    """
    limits = _thresholds(thresholds)
    owner = {}
    for prof in profiles:
        for snap in prof.snapshots:
            owner[(prof.id, snap.frame_index)] = prof.id
    hits = {prof.id: set() for prof in profiles}
    for det in detections:
        pid = owner.get(det.snapshot_id)
        if pid is None:
            raise AssociationError(
                f"detection references unknown snapshot {det.snapshot_id} "
                f"(profile {det.snapshot_id[0]}, frame {det.snapshot_id[1]})")
        if det.confidence >= limits[det.cls]:
            hits[pid].add(det.cls)
    return {pid: TrackFlags(SecondaryClass.POLLEN in found, SecondaryClass.MITE in found)
            for pid, found in hits.items()}


def summarize_video(profiles, flags=None):
    """Bucket finalized profiles by final status and aggregate flags/size."""
    counts = {status: 0 for status in TrackStatus}
    sizes = []
    for prof in profiles:
        counts[TrackStatus(prof.status)] += 1
        if prof.size_mm is not None:
            sizes.append(prof.size_mm)
    flags = flags or {}
    return VideoSummary(
        arriving=counts[TrackStatus.ARRIVING],
        leaving=counts[TrackStatus.LEAVING],
        deck=counts[TrackStatus.DECK],
        new=counts[TrackStatus.NEW],
        pollen_tracks=sum(1 for f in flags.values() if f[0]),
        mite_tracks=sum(1 for f in flags.values() if f[1]),
        mean_size_mm=math.fsum(sizes) / len(sizes) if sizes else None,
        total_tracks=sum(counts.values()),
    )
