"""Append-only hive measurement store.

Layout under ``data_dir``::

    hives.json              registry: hive id -> name, location, auth key
    samples/<hive>.jsonl    one JSON sample per line, timestamp ordered
    network/<hive>.json     last self-reported network descriptor

Writes are fsynced before they are acknowledged.  Each hive's log is loaded
once into memory; the in-memory copy is the read index.
"""
import calendar
import hmac
import json
import logging
import math
import os
import re
import tempfile
import threading
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import NamedTuple, Optional

from ..exceptions import (AuthorizationError, HiveNotFoundError, InvalidInputError,
                          OrderingError, SampleValidationError)

logger = logging.getLogger(__name__)

HIVE_ID = re.compile(r"^[A-Za-z0-9_-]{1,64}$")
AUTH_KEY = re.compile(r"^[A-Za-z0-9]{8,256}$")

# the ten hive measurements and their units
MEASUREMENTS = {
    "temperature_f": "F",
    "humidity_pct": "%RH",
    "cpu_temp_c": "C",
    "gpu_temp_c": "C",
    "bees_deck": "bees",
    "bees_leaving": "bees",
    "bees_arriving": "bees",
    "avg_size_mm": "mm",
    "pollen_count": "bees",
    "mite_count": "bees",
}
COUNT_FIELDS = ("bees_deck", "bees_leaving", "bees_arriving", "pollen_count", "mite_count")


@dataclass(frozen=True)
class HiveSample:
    timestamp: int
    temperature_f: float
    humidity_pct: float
    cpu_temp_c: float
    gpu_temp_c: float
    bees_deck: int
    bees_leaving: int
    bees_arriving: int
    avg_size_mm: Optional[float]
    pollen_count: int
    mite_count: int

    @classmethod
    def from_dict(cls, data):
        """Validate a payload, reporting every bad field at once."""
        if not isinstance(data, dict):
            raise SampleValidationError({"sample": "must be a JSON object"})
        problems, values = {}, {}
        names = [f.name for f in fields(cls)]
        for key in data:
            if key not in names:
                problems[str(key)] = "unknown field"
        for name in names:
            if name not in data:
                if name == "avg_size_mm":
                    values[name] = None
                else:
                    problems[name] = "missing"
                continue
            value = data[name]
            if name == "avg_size_mm" and value is None:
                values[name] = None
                continue
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                problems[name] = "must be a number"
                continue
            if not math.isfinite(value):
                problems[name] = "must be finite"
                continue
            if name == "timestamp" or name in COUNT_FIELDS:
                if value != int(value) or value < 0:
                    problems[name] = "must be a non-negative integer"
                    continue
                value = int(value)
            else:
                value = float(value)
            if name == "humidity_pct" and not 0.0 <= value <= 100.0:
                problems[name] = f"{value} outside [0, 100]"
                continue
            if name == "avg_size_mm" and value < 0:
                problems[name] = "must be non-negative"
                continue
            values[name] = value
        if problems:
            raise SampleValidationError(problems)
        return cls(**values)

    def to_dict(self):
        return asdict(self)


class Ack(NamedTuple):
    hive: str
    sequence: int


def downsample_hourly(series):
    """Keep the earliest sample of every UTC clock hour; empty hours vanish."""
    out, bucket, last = [], None, None
    for sample in series:
        if last is not None and sample.timestamp < last:
            raise InvalidInputError("series is not timestamp ordered")
        last = sample.timestamp
        hour = sample.timestamp // 3600
        if hour != bucket:
            out.append(sample)
            bucket = hour
    return out


def year_bounds(year):
    return (calendar.timegm((year, 1, 1, 0, 0, 0)),
            calendar.timegm((year + 1, 1, 1, 0, 0, 0)))


def _fsync_dir(path):
    try:
        fd = os.open(path, os.O_RDONLY)
    except OSError:
        return
    try:
        os.fsync(fd)
    finally:
        os.close(fd)


def _atomic_write_json(path, data):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(data, fh, indent=2, sort_keys=True)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    _fsync_dir(path.parent)


class HiveRecordStore:
    """Durable per-hive sample logs plus the hive registry.

    Safe for concurrent use from threads: writes to one hive are serialized,
    distinct hives proceed in parallel and reads never observe a partially
    appended sample.
    """

    def __init__(self, data_dir):
        self.data_dir = Path(data_dir)
        (self.data_dir / "samples").mkdir(parents=True, exist_ok=True)
        (self.data_dir / "network").mkdir(parents=True, exist_ok=True)
        self._registry_path = self.data_dir / "hives.json"
        self._registry_lock = threading.Lock()
        self._locks = {}
        self._samples = {}
        if self._registry_path.exists():
            with open(self._registry_path, encoding="utf-8") as fh:
                self._hives = json.load(fh)
        else:
            self._hives = {}

    # registry ---------------------------------------------------------

    def register_hive(self, hive, key, name="", location=""):
        """Add or update a hive; returns its registry entry."""
        if not isinstance(hive, str) or not HIVE_ID.match(hive):
            raise InvalidInputError(f"invalid hive id {hive!r}")
        if not isinstance(key, str) or not AUTH_KEY.match(key):
            raise InvalidInputError("auth key must be 8-256 alphanumeric characters")
        with self._registry_lock:
            hives = dict(self._hives)
            hives[hive] = {"name": name, "location": location, "key": key}
            _atomic_write_json(self._registry_path, hives)
            self._hives = hives
        return {"id": hive, "name": name, "location": location}

    def hives(self):
        return {h: {"name": e["name"], "location": e["location"]}
                for h, e in self._hives.items()}

    def _lock(self, hive):
        with self._registry_lock:
            return self._locks.setdefault(hive, threading.Lock())

    def _require(self, hive):
        if hive not in self._hives:
            raise HiveNotFoundError(f"unknown hive {hive!r}")

    def authorize(self, key, hive):
        self._require(hive)
        expected = self._hives[hive]["key"].encode()
        given = key.encode() if isinstance(key, str) else b""
        if not hmac.compare_digest(expected, given):
            raise AuthorizationError(f"key not authorized for hive {hive!r}")

    # samples ----------------------------------------------------------

    def _log_path(self, hive):
        return self.data_dir / "samples" / f"{hive}.jsonl"

    def _load(self, hive):
        # caller holds the hive lock
        if hive in self._samples:
            return self._samples[hive]
        samples = []
        path = self._log_path(hive)
        if path.exists():
            with open(path, "rb") as fh:
                lines = fh.read().split(b"\n")
            for number, raw in enumerate(lines, start=1):
                if not raw.strip():
                    continue
                try:
                    samples.append(HiveSample.from_dict(json.loads(raw)))
                except (ValueError, SampleValidationError):
                    if number != len(lines):
                        raise
                    # unterminated tail from an interrupted append
                    logger.warning("%s: dropping torn final record", path)
                    keep = sum(len(chunk) + 1 for chunk in lines[:-1])
                    with open(path, "r+b") as fh:
                        fh.truncate(keep)
                        os.fsync(fh.fileno())
        self._samples[hive] = samples
        return samples

    def upload_data(self, key, hive, sample):
        """Authorize, validate and durably append one sample."""
        return self.upload_batch(key, hive, [sample])

    def upload_batch(self, key, hive, samples):
        """Append several samples with a single fsync.  All or nothing."""
        self.authorize(key, hive)
        parsed = [s if isinstance(s, HiveSample) else HiveSample.from_dict(s) for s in samples]
        if not parsed:
            raise SampleValidationError({"samples": "empty batch"})
        with self._lock(hive):
            stored = self._load(hive)
            last = stored[-1].timestamp if stored else None
            for s in parsed:
                if last is not None and s.timestamp <= last:
                    raise OrderingError(
                        f"timestamp {s.timestamp} is not after last stored {last}")
                last = s.timestamp
            payload = "".join(json.dumps(s.to_dict(), sort_keys=True) + "\n" for s in parsed)
            with open(self._log_path(hive), "a", encoding="utf-8") as fh:
                fh.write(payload)
                fh.flush()
                os.fsync(fh.fileno())
            stored.extend(parsed)
            return Ack(hive, len(stored))

    def samples(self, hive):
        self._require(hive)
        with self._lock(hive):
            return list(self._load(hive))

    def get_latest(self, hive):
        """Most recent sample, or ``None`` when the hive has no data."""
        self._require(hive)
        with self._lock(hive):
            stored = self._load(hive)
            return stored[-1] if stored else None

    def get_history(self, hive, year):
        start, end = year_bounds(int(year))
        return downsample_hourly([s for s in self.samples(hive) if start <= s.timestamp < end])

    def get_data(self, hive, mode="latest", year=None):
        if mode == "latest":
            return self.get_latest(hive)
        if mode == "history":
            if year is None:
                raise InvalidInputError("history mode needs a year")
            return self.get_history(hive, year)
        raise InvalidInputError(f"unknown mode {mode!r}")

    # network ----------------------------------------------------------

    def upload_network(self, key, hive, info):
        self.authorize(key, hive)
        if not isinstance(info, dict) or not info:
            raise SampleValidationError({"network": "must be a non-empty JSON object"})
        bad = {str(k): "must be a string, number or null" for k, v in info.items()
               if not isinstance(k, str) or not (v is None or isinstance(v, (str, int, float)))}
        if bad:
            raise SampleValidationError(bad)
        with self._lock(hive):
            _atomic_write_json(self.data_dir / "network" / f"{hive}.json", info)
        return Ack(hive, 1)

    def get_network(self, hive):
        self._require(hive)
        path = self.data_dir / "network" / f"{hive}.json"
        if not path.exists():
            return None
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)


def read_key_file(path):
    """Parse ``hive_id key [display name]`` lines; ``#`` starts a comment."""
    entries = {}
    with open(path, encoding="utf-8") as fh:
        for number, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split(None, 2)
            if len(parts) < 2:
                raise InvalidInputError(f"{path}:{number}: expected 'hive_id key [name]'")
            entries[parts[0]] = (parts[1], parts[2] if len(parts) > 2 else "")
    return entries
