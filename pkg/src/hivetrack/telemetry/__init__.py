"""Hive telemetry: sample store, HTTP service and upload client."""
from .store import (MEASUREMENTS, Ack, HiveRecordStore, HiveSample, downsample_hourly,
                    read_key_file, year_bounds)

__all__ = ["MEASUREMENTS", "Ack", "HiveRecordStore", "HiveSample", "downsample_hourly",
           "read_key_file", "year_bounds"]
