"""Coordinate math for the hive entrance: box midpoints, trigger-line
crossings and pixel-to-millimetre size conversion.

Boxes use image coordinates: ``(min_x, min_y)`` is the upper-left corner and
``(max_x, max_y)`` the lower-right one; y grows downward, so the hive
interior (top of the frame) has small y.
"""
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

from ._validation import check_box_coords, check_scalar
from .exceptions import InvalidInputError


@dataclass(frozen=True)
class DetectionBox:
    """Axis-aligned detector output in pixel coordinates."""

    min_x: float
    min_y: float
    max_x: float
    max_y: float
    confidence: float = 1.0

    def __post_init__(self):
        values = check_box_coords(self.min_x, self.min_y, self.max_x,
                                  self.max_y, self.confidence)
        for name, value in zip(("min_x", "min_y", "max_x", "max_y", "confidence"), values):
            object.__setattr__(self, name, value)

    @property
    def width(self):
        return self.max_x - self.min_x

    @property
    def height(self):
        return self.max_y - self.min_y

    def translated(self, dx, dy):
        return DetectionBox(self.min_x + dx, self.min_y + dy,
                            self.max_x + dx, self.max_y + dy, self.confidence)


class Midpoint(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class HiveGeometry:
    """Frame layout and physical scale of the imaged entrance.

    Defaults are the deployed values: a 640x420 frame split into thirds by
    trigger lines at y=140 and y=280, a 50 px matching radius, and a
    110 mm x 65 mm work area.
    """

    frame_w: float = 640.0
    frame_h: float = 420.0
    arrive_line: float = 140.0
    leave_line: float = 280.0
    match_tolerance: float = 50.0
    container_w_mm: float = 110.0
    container_h_mm: float = 65.0

    def __post_init__(self):
        for name in ("frame_w", "frame_h", "match_tolerance",
                     "container_w_mm", "container_h_mm"):
            object.__setattr__(self, name, check_scalar(
                getattr(self, name), name, min_val=0.0, include_min=False))
        for name in ("arrive_line", "leave_line"):
            object.__setattr__(self, name, check_scalar(getattr(self, name), name))
        if not 0 < self.arrive_line < self.leave_line < self.frame_h:
            raise InvalidInputError(
                "trigger lines must satisfy 0 < arrive_line < leave_line < frame_h, got "
                f"{self.arrive_line}, {self.leave_line}, frame_h={self.frame_h}")

    @property
    def px_per_mm_x(self):
        return self.frame_w / self.container_w_mm

    @property
    def px_per_mm_y(self):
        return self.frame_h / self.container_h_mm


class CrossingEvent(str, Enum):
    ARRIVE = "arrive"
    DECK_FROM_ARRIVE = "deck_from_arrive"
    LEAVE = "leave"
    DECK_FROM_LEAVE = "deck_from_leave"
    NONE = "none"

    def __bool__(self):
        return self is not CrossingEvent.NONE


def midpoint(box):
    """Centre of ``box``: half the extent added to the minimum corner."""
    if not isinstance(box, DetectionBox):
        raise InvalidInputError(f"expected a DetectionBox, got {type(box).__name__}")
    return Midpoint((box.max_x - box.min_x) / 2 + box.min_x,
                    (box.max_y - box.min_y) / 2 + box.min_y)


def bee_size_mm(box, geom):
    """Body length in millimetres from the longest side of ``box``.

    A horizontal longest side is scaled by the x pixel density, a vertical
    one by the y density; ties go to the x axis.
    """
    if not isinstance(box, DetectionBox):
        raise InvalidInputError(f"expected a DetectionBox, got {type(box).__name__}")
    dx = box.max_x - box.min_x
    dy = box.max_y - box.min_y
    if dx >= dy:
        return dx / (geom.frame_w / geom.container_w_mm)
    return dy / (geom.frame_h / geom.container_h_mm)


def crossing(prev_y, cur_y, geom):
    """Classify one inter-frame move of a midpoint against the trigger lines.

    The arrive line is tested before the leave line, so a move spanning both
    lines reports the arrive-line event only.
    """
    a, b = geom.arrive_line, geom.leave_line
    if prev_y > a and cur_y <= a:
        return CrossingEvent.ARRIVE
    if prev_y <= a and cur_y > a:
        return CrossingEvent.DECK_FROM_ARRIVE
    if prev_y < b and cur_y >= b:
        return CrossingEvent.LEAVE
    if prev_y > b and cur_y <= b:
        return CrossingEvent.DECK_FROM_LEAVE
    return CrossingEvent.NONE
