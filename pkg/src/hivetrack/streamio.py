"""Readers and writers for the on-disk formats.

All formats are UTF-8 text with LF line endings.  See ``docs/formats.md``
for the exact grammar.

* detection stream: JSON Lines, one frame per line
  ``{"frame": 12, "boxes": [[min_x, min_y, max_x, max_y, confidence], ...]}``
* secondary detections, ground truth, track logs and evaluation tables:
  comma-separated with a header row

Parsers accept ``bytes``, binary or text file objects, or an iterable of
lines.  Every failure surfaces as :class:`~hivetrack.exceptions.FormatError`.
"""
import csv
import io
import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from ._validation import check_probability
from .evaluation import CountPair, PollenVideoCounts, VideoCounts
from .exceptions import FormatError, HiveTrackError, InvalidInputError
from .geometry import CrossingEvent, DetectionBox, Midpoint
from .tracker import FrameDetections, SnapshotRef, TrackProfile, TrackStatus


class SecondaryClass(str, Enum):
    POLLEN = "Pollen"
    MITE = "Mite"


@dataclass(frozen=True)
class SecondaryDetection:
    """Pollen/mite detection on one snapshot crop.

    ``snapshot_id`` is ``(profile_id, frame_index)``; box coordinates are
    local to the crop.
    """

    snapshot_id: tuple
    cls: SecondaryClass
    confidence: float
    box: DetectionBox

    def __post_init__(self):
        object.__setattr__(self, "cls", SecondaryClass(self.cls))
        object.__setattr__(self, "confidence",
                           check_probability(self.confidence, "confidence"))
        pid, frame = self.snapshot_id
        object.__setattr__(self, "snapshot_id", (int(pid), int(frame)))


@dataclass(frozen=True)
class GroundTruthRecord:
    bee_id: int
    final_status: TrackStatus
    first_frame: int
    last_frame: int
    has_pollen: bool = False
    has_mite: bool = False
    size_mm: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "final_status", TrackStatus(self.final_status))
        if self.last_frame < self.first_frame:
            raise InvalidInputError(
                f"bee {self.bee_id}: last_frame {self.last_frame} < first_frame {self.first_frame}")


# --------------------------------------------------------------------------
# line plumbing

def _iter_lines(source):
    """Yield ``(line_number, text)`` for each line of ``source``."""
    if isinstance(source, (bytes, bytearray, memoryview)):
        source = io.BytesIO(bytes(source))
    elif isinstance(source, str):
        raise TypeError("pass file content as bytes or a file object, not str")
    for number, raw in enumerate(source, start=1):
        if isinstance(raw, (bytes, bytearray)):
            try:
                raw = bytes(raw).decode("utf-8")
            except UnicodeDecodeError as exc:
                raise FormatError(f"invalid UTF-8 ({exc.reason})", number) from None
        elif not isinstance(raw, str):
            raise FormatError(f"expected a text line, got {type(raw).__name__}", number)
        yield number, raw.rstrip("\r\n")


def _text_sink(sink):
    """Wrap a binary sink so writers can emit ``str``."""
    if isinstance(sink, io.TextIOBase):
        return sink, False
    return io.TextIOWrapper(sink, encoding="utf-8", newline="\n", write_through=True), True


def _write_lines(sink, lines):
    out, wrapped = _text_sink(sink)
    try:
        for line in lines:
            out.write(line)
            out.write("\n")
        out.flush()
    finally:
        if wrapped:
            out.detach()


def _num(text, name, line):
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise FormatError(f"{name}: malformed number {text!r}", line) from None
    if not math.isfinite(value):
        raise FormatError(f"{name}: non-finite number {text!r}", line)
    return value


def _int(text, name, line):
    try:
        return int(text)
    except (TypeError, ValueError):
        raise FormatError(f"{name}: malformed integer {text!r}", line) from None


def _optional_num(text, name, line):
    return None if text == "" else _num(text, name, line)


def _fmt(value):
    return repr(float(value))


def _read_table(source, required):
    """Parse a headed CSV into ``(line_number, row_dict)`` pairs."""
    lines = [(n, text) for n, text in _iter_lines(source)]
    while lines and not lines[-1][1].strip():
        lines.pop()
    if not lines:
        return
    reader = csv.reader([text for _, text in lines], strict=True)
    numbers = [n for n, _ in lines]
    try:
        header = [h.strip() for h in next(reader)]
        missing = [c for c in required if c not in header]
        if missing:
            raise FormatError(f"header lacks column(s): {', '.join(missing)}", numbers[0])
        if len(set(header)) != len(header):
            raise FormatError("duplicate header column", numbers[0])
        for row in reader:
            line = numbers[min(reader.line_num, len(numbers)) - 1]
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise FormatError(
                    f"expected {len(header)} fields, got {len(row)}", line)
            yield line, dict(zip(header, (cell.strip() for cell in row)))
    except csv.Error as exc:
        raise FormatError(f"CSV syntax: {exc}") from None


def _write_table(sink, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    out, wrapped = _text_sink(sink)
    try:
        out.write(buf.getvalue())
        out.flush()
    finally:
        if wrapped:
            out.detach()


def _box(values, line):
    try:
        return DetectionBox(*values)
    except HiveTrackError as exc:
        raise FormatError(f"invalid box: {exc}", line) from None
    except TypeError:
        raise FormatError(f"malformed box {values!r}", line) from None


def _flag(text, name, line):
    lowered = text.lower()
    if lowered in ("1", "true", "yes"):
        return True
    if lowered in ("0", "false", "no", ""):
        return False
    raise FormatError(f"{name}: expected 0 or 1, got {text!r}", line)


def _status(text, line):
    try:
        return TrackStatus(text)
    except ValueError:
        allowed = ", ".join(s.value for s in TrackStatus)
        raise FormatError(f"unknown status {text!r} (expected one of {allowed})", line) from None


# --------------------------------------------------------------------------
# detection streams

def _reject_constant(token):
    raise ValueError(f"non-finite constant {token}")


def parse_detection_stream(source):
    """Yield :class:`FrameDetections` from a JSON Lines detection stream."""
    previous = None
    for line, text in _iter_lines(source):
        if not text.strip():
            continue
        try:
            record = json.loads(text, parse_constant=_reject_constant)
        except (ValueError, RecursionError) as exc:
            raise FormatError(f"malformed JSON ({exc})", line) from None
        if not isinstance(record, dict) or set(record) != {"frame", "boxes"}:
            raise FormatError('record must be an object with keys "frame" and "boxes"', line)
        index, boxes = record["frame"], record["boxes"]
        if isinstance(index, bool) or not isinstance(index, int) or index < 0:
            raise FormatError(f"frame must be a non-negative integer, got {index!r}", line)
        if previous is not None and index <= previous:
            raise FormatError(f"frame {index} does not follow frame {previous}", line)
        if not isinstance(boxes, list):
            raise FormatError("boxes must be a list", line)
        parsed = []
        for values in boxes:
            if not isinstance(values, list) or len(values) != 5:
                raise FormatError(
                    "each box must be [min_x, min_y, max_x, max_y, confidence]", line)
            parsed.append(_box(values, line))
        previous = index
        yield FrameDetections(index, tuple(parsed))


def write_detection_stream(frames, sink):
    _write_lines(sink, (json.dumps({
        "frame": f.frame_index,
        "boxes": [[b.min_x, b.min_y, b.max_x, b.max_y, b.confidence] for b in f.boxes],
    }) for f in frames))


def read_detection_stream(path):
    with open(path, "rb") as fh:
        return list(parse_detection_stream(fh))


# --------------------------------------------------------------------------
# secondary (pollen/mite) detections

SECONDARY_COLUMNS = ("profile_id", "frame_index", "class", "confidence",
                     "min_x", "min_y", "max_x", "max_y")


def parse_secondary(source):
    records = []
    for line, row in _read_table(source, SECONDARY_COLUMNS):
        try:
            cls = SecondaryClass(row["class"])
        except ValueError:
            raise FormatError(f"class must be Pollen or Mite, got {row['class']!r}", line) from None
        conf = _num(row["confidence"], "confidence", line)
        box = _box([_num(row[k], k, line) for k in ("min_x", "min_y", "max_x", "max_y")]
                   + [1.0], line)
        try:
            records.append(SecondaryDetection(
                (_int(row["profile_id"], "profile_id", line),
                 _int(row["frame_index"], "frame_index", line)),
                cls, conf, box))
        except HiveTrackError as exc:
            raise FormatError(str(exc), line) from None
    return records


def write_secondary(detections, sink):
    _write_table(sink, SECONDARY_COLUMNS, (
        (d.snapshot_id[0], d.snapshot_id[1], d.cls.value, _fmt(d.confidence),
         _fmt(d.box.min_x), _fmt(d.box.min_y), _fmt(d.box.max_x), _fmt(d.box.max_y))
        for d in detections))


# --------------------------------------------------------------------------
# ground truth

TRUTH_COLUMNS = ("bee_id", "final_status", "first_frame", "last_frame",
                 "has_pollen", "has_mite")


def parse_ground_truth(source):
    records, seen = [], set()
    for line, row in _read_table(source, TRUTH_COLUMNS):
        bee_id = _int(row["bee_id"], "bee_id", line)
        if bee_id in seen:
            raise FormatError(f"duplicate bee_id {bee_id}", line)
        seen.add(bee_id)
        first = _int(row["first_frame"], "first_frame", line)
        last = _int(row["last_frame"], "last_frame", line)
        if first < 0 or last < first:
            raise FormatError(f"bad frame span {first}..{last}", line)
        records.append(GroundTruthRecord(
            bee_id, _status(row["final_status"], line), first, last,
            _flag(row["has_pollen"], "has_pollen", line),
            _flag(row["has_mite"], "has_mite", line),
            _optional_num(row.get("size_mm", ""), "size_mm", line)))
    return records


def write_ground_truth(records, sink):
    _write_table(sink, TRUTH_COLUMNS + ("size_mm",), (
        (r.bee_id, r.final_status.value, r.first_frame, r.last_frame,
         int(r.has_pollen), int(r.has_mite),
         "" if r.size_mm is None else _fmt(r.size_mm)) for r in records))


# --------------------------------------------------------------------------
# track logs

TRACK_COLUMNS = ("id", "status", "first_frame", "last_frame", "last_x", "last_y",
                 "size_mm", "snapshots")


def _encode_snapshots(snapshots):
    return ";".join(
        ":".join([str(s.frame_index), s.crossing.value]
                 + [_fmt(v) for v in (s.box.min_x, s.box.min_y, s.box.max_x,
                                      s.box.max_y, s.box.confidence)])
        for s in snapshots)


def _decode_snapshots(text, line):
    snapshots = []
    if not text:
        return snapshots
    for chunk in text.split(";"):
        parts = chunk.split(":")
        if len(parts) != 7:
            raise FormatError(f"malformed snapshot {chunk!r}", line)
        try:
            event = CrossingEvent(parts[1])
        except ValueError:
            raise FormatError(f"unknown crossing {parts[1]!r}", line) from None
        if not event:
            raise FormatError("snapshot without a crossing", line)
        box = _box([_num(v, "snapshot box", line) for v in parts[2:]], line)
        snapshots.append(SnapshotRef(_int(parts[0], "snapshot frame", line), box, event))
    return snapshots


def write_track_log(profiles, sink):
    _write_table(sink, TRACK_COLUMNS, (
        (p.id, p.status.value, p.first_frame, p.last_frame,
         _fmt(p.last_midpoint.x), _fmt(p.last_midpoint.y),
         "" if p.size_mm is None else _fmt(p.size_mm),
         _encode_snapshots(p.snapshots)) for p in profiles))


def parse_track_log(source):
    profiles, seen = [], set()
    for line, row in _read_table(source, TRACK_COLUMNS):
        pid = _int(row["id"], "id", line)
        if pid in seen:
            raise FormatError(f"duplicate id {pid}", line)
        seen.add(pid)
        first = _int(row["first_frame"], "first_frame", line)
        last = _int(row["last_frame"], "last_frame", line)
        if last < first:
            raise FormatError(f"bad frame span {first}..{last}", line)
        size = _optional_num(row["size_mm"], "size_mm", line)
        profiles.append(TrackProfile(
            id=pid,
            last_midpoint=Midpoint(_num(row["last_x"], "last_x", line),
                                   _num(row["last_y"], "last_y", line)),
            status=_status(row["status"], line),
            first_frame=first, last_frame=last, size_mm=size,
            snapshots=_decode_snapshots(row["snapshots"], line)))
    return profiles


# --------------------------------------------------------------------------
# evaluation tables

COUNT_COLUMNS = ("video", "arriving_manual", "arriving_algorithm",
                 "leaving_manual", "leaving_algorithm")
POLLEN_COLUMNS = ("video", "manual_pollen", "algorithm_pollen", "false_pos",
                  "false_neg", "total_bees")


def parse_count_table(source):
    """Per-video arriving/leaving manual and algorithm counts."""
    videos = []
    for line, row in _read_table(source, COUNT_COLUMNS):
        n = {k: _int(row[k], k, line) for k in COUNT_COLUMNS[1:]}
        if any(v < 0 for v in n.values()):
            raise FormatError("counts must be non-negative", line)
        videos.append(VideoCounts(
            row["video"],
            CountPair(n["arriving_manual"], n["arriving_algorithm"]),
            CountPair(n["leaving_manual"], n["leaving_algorithm"])))
    return videos


def write_count_table(videos, sink):
    _write_table(sink, COUNT_COLUMNS, (
        (v.label, v.arriving.manual, v.arriving.algorithm,
         v.leaving.manual, v.leaving.algorithm) for v in videos))


def parse_pollen_table(source):
    videos = []
    for line, row in _read_table(source, POLLEN_COLUMNS):
        n = {k: _int(row[k], k, line) for k in POLLEN_COLUMNS[1:]}
        try:
            videos.append(PollenVideoCounts(label=row["video"], **n))
        except HiveTrackError as exc:
            raise FormatError(str(exc), line) from None
    return videos


def write_pollen_table(videos, sink):
    _write_table(sink, POLLEN_COLUMNS, (
        (v.label, v.manual_pollen, v.algorithm_pollen, v.false_pos,
         v.false_neg, v.total_bees) for v in videos))
