"""Profile-based bee tracker.

Detections in frame ``n`` are linked to the profiles active in frame ``n-1``
by nearest midpoint within a fixed radius.  Unlinked detections open new
profiles; profiles without a detection are retired immediately.  Trigger
line crossings drive the status machine and capture size and snapshots.

The functional core (:func:`match_detections`, :func:`step`,
:func:`finalize`) is wrapped by :class:`BeeTracker`, a scikit-learn style
estimator.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_frame_index, check_scalar
from .exceptions import InvalidInputError
from .geometry import (CrossingEvent, DetectionBox, HiveGeometry, Midpoint,
                       bee_size_mm, crossing, midpoint)


class TrackStatus(str, Enum):
    NEW = "New"
    ARRIVING = "Arriving"
    LEAVING = "Leaving"
    DECK = "Deck"


STATUS_AFTER = {
    CrossingEvent.ARRIVE: TrackStatus.ARRIVING,
    CrossingEvent.LEAVE: TrackStatus.LEAVING,
    CrossingEvent.DECK_FROM_ARRIVE: TrackStatus.DECK,
    CrossingEvent.DECK_FROM_LEAVE: TrackStatus.DECK,
}


@dataclass(frozen=True)
class SnapshotRef:
    frame_index: int
    box: DetectionBox
    crossing: CrossingEvent


@dataclass
class TrackProfile:
    id: int
    last_midpoint: Midpoint
    status: TrackStatus
    first_frame: int
    last_frame: int
    size_mm: Optional[float] = None
    snapshots: List[SnapshotRef] = field(default_factory=list)

    @property
    def snapshot_ids(self):
        return [(self.id, s.frame_index) for s in self.snapshots]


@dataclass(frozen=True)
class FrameDetections:
    frame_index: int
    boxes: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "frame_index", check_frame_index(self.frame_index))
        boxes = tuple(self.boxes)
        for box in boxes:
            if not isinstance(box, DetectionBox):
                raise InvalidInputError(
                    f"frame {self.frame_index}: expected DetectionBox, got {type(box).__name__}")
        object.__setattr__(self, "boxes", boxes)


@dataclass
class TrackerState:
    """Mutable tracking state for a single stream; single writer only."""

    geom: HiveGeometry = field(default_factory=HiveGeometry)
    active: dict = field(default_factory=dict)
    retired: list = field(default_factory=list)
    next_id: int = 1
    last_frame_index: Optional[int] = None
    finalized: bool = False


def match_detections(prev, cur, tolerance):
    """Greedy nearest-neighbour association of midpoints.

    ``prev`` is a sequence of ``(id, Midpoint)``, ``cur`` a sequence of
    midpoints.  All pairs within ``tolerance`` are visited by ascending
    distance and accepted when neither side is taken yet.  Ties are broken by
    lower id and then by the current midpoint's coordinates, so the result
    does not depend on the order of ``cur``.

    Returns ``(assignments, unmatched_prev, unmatched_cur)`` where
    ``assignments`` holds ``(id, cur_index)`` pairs sorted by id.
    """
    tolerance = check_scalar(tolerance, "tolerance", min_val=0.0, include_min=False)
    prev = list(prev)
    cur = list(cur)
    if not prev or not cur:
        return [], sorted(pid for pid, _ in prev), list(range(len(cur)))

    ids = np.array([pid for pid, _ in prev], dtype=np.int64)
    p = np.array([tuple(pt) for _, pt in prev], dtype=float).reshape(-1, 2)
    c = np.array([tuple(pt) for pt in cur], dtype=float).reshape(-1, 2)
    dist = np.hypot(p[:, None, 0] - c[None, :, 0], p[:, None, 1] - c[None, :, 1])
    pi, ci = np.nonzero(dist <= tolerance)
    # lexsort: last key is primary
    order = np.lexsort((ci, c[ci, 1], c[ci, 0], ids[pi], dist[pi, ci]))

    taken_prev, taken_cur = set(), set()
    assignments = []
    for k in order:
        a, b = int(pi[k]), int(ci[k])
        if a in taken_prev or b in taken_cur:
            continue
        taken_prev.add(a)
        taken_cur.add(b)
        assignments.append((int(ids[a]), b))
    assignments.sort()
    unmatched_prev = sorted(int(ids[a]) for a in range(len(prev)) if a not in taken_prev)
    unmatched_cur = [b for b in range(len(cur)) if b not in taken_cur]
    return assignments, unmatched_prev, unmatched_cur


def step(state, frame):
    """Advance ``state`` by one frame in place.

    Returns ``(state, events)`` where ``events`` lists ``(id, CrossingEvent)``
    for every profile that crossed a trigger line in this frame.
    """
    if state.finalized:
        raise InvalidInputError("tracker state is finalized")
    if not isinstance(frame, FrameDetections):
        raise InvalidInputError(f"expected FrameDetections, got {type(frame).__name__}")
    index = check_frame_index(frame.frame_index, state.last_frame_index)
    geom = state.geom

    mids = [midpoint(b) for b in frame.boxes]
    prev = [(pid, prof.last_midpoint) for pid, prof in state.active.items()]
    assignments, lost, fresh = match_detections(prev, mids, geom.match_tolerance)

    events = []
    for pid, j in assignments:
        prof = state.active[pid]
        box, mid = frame.boxes[j], mids[j]
        event = crossing(prof.last_midpoint.y, mid.y, geom)
        if event:
            prof.status = STATUS_AFTER[event]
            if prof.size_mm is None:
                prof.size_mm = bee_size_mm(box, geom)
            prof.snapshots.append(SnapshotRef(index, box, event))
            events.append((pid, event))
        prof.last_midpoint = mid
        prof.last_frame = index

    for pid in lost:
        state.retired.append(state.active.pop(pid))

    for j in fresh:
        pid = state.next_id
        state.next_id += 1
        state.active[pid] = TrackProfile(id=pid, last_midpoint=mids[j],
                                         status=TrackStatus.NEW,
                                         first_frame=index, last_frame=index)

    state.last_frame_index = index
    return state, events


def finalize(state):
    """Retire every active profile and return all profiles ordered by id."""
    state.retired.extend(state.active.values())
    state.active = {}
    state.finalized = True
    state.retired.sort(key=lambda p: p.id)
    return list(state.retired)


def track(frames, geom=None):
    """Run a fresh tracker over ``frames`` and return the finalized profiles."""
    state = TrackerState(geom=geom or HiveGeometry())
    for frame in frames:
        step(state, frame)
    return finalize(state)


class BeeTracker(TransformerMixin, BaseEstimator):
    """Estimator front end for the tracker.

    ``fit`` consumes a detection stream (an iterable of
    :class:`FrameDetections`) and stores the finalized profiles in
    ``profiles_`` and the crossing events in ``events_``.  ``transform``
    tracks a stream with the same parameters and returns its profiles
    without touching fitted state.  ``partial_fit`` feeds one frame at a time
    for live use; call :meth:`finalize` when the stream ends.

    Parameters mirror :class:`~hivetrack.geometry.HiveGeometry`.
    """

    def __init__(self, frame_w=640.0, frame_h=420.0, arrive_line=140.0,
                 leave_line=280.0, match_tolerance=50.0,
                 container_w_mm=110.0, container_h_mm=65.0):
        self.frame_w = frame_w
        self.frame_h = frame_h
        self.arrive_line = arrive_line
        self.leave_line = leave_line
        self.match_tolerance = match_tolerance
        self.container_w_mm = container_w_mm
        self.container_h_mm = container_h_mm

    @classmethod
    def from_geometry(cls, geom):
        return cls(**{k: getattr(geom, k) for k in cls._get_param_names()})

    def _geometry(self):
        return HiveGeometry(**self.get_params())

    def partial_fit(self, frame, y=None):
        if not hasattr(self, "state_") or self.state_.finalized:
            self.state_ = TrackerState(geom=self._geometry())
            self.events_ = []
        _, events = step(self.state_, frame)
        self.events_.extend((frame.frame_index, pid, ev) for pid, ev in events)
        return self

    def finalize(self):
        if not hasattr(self, "state_"):
            self.state_ = TrackerState(geom=self._geometry())
            self.events_ = []
        self.profiles_ = finalize(self.state_)
        return self.profiles_

    def fit(self, X, y=None):
        self.state_ = TrackerState(geom=self._geometry())
        self.events_ = []
        for frame in X:
            self.partial_fit(frame)
        self.finalize()
        return self

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X, y).profiles_

    def transform(self, X):
        return track(X, self._geometry())

    def score(self, X, y):
        """Average arriving/leaving count accuracy of the tracked stream ``X``
        against ground-truth records ``y``."""
        from .evaluation import compare_runs

        return compare_runs(y, self.transform(X)).average_accuracy
