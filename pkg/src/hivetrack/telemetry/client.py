"""Minimal HTTP client used by the monitoring side (``hivetrack track``)."""
import json
import urllib.error
import urllib.request

from ..exceptions import TelemetryError
from .service import AUTH_HEADER, sample_payload


def _post(url, key, payload, timeout):
    request = urllib.request.Request(
        url, data=json.dumps(payload).encode("utf-8"), method="POST",
        headers={"Content-Type": "application/json", AUTH_HEADER: key})
    try:
        with urllib.request.urlopen(request, timeout=timeout) as response:
            return json.loads(response.read() or b"{}")
    except urllib.error.HTTPError as exc:
        detail = exc.read().decode("utf-8", "replace")
        raise TelemetryError(f"upload rejected ({exc.code}): {detail}") from None
    except (urllib.error.URLError, OSError) as exc:
        raise TelemetryError(f"upload failed: {exc}") from None


def upload_sample(base_url, key, hive, sample, timeout=10.0):
    return _post(base_url.rstrip("/") + "/api/upload-data", key,
                 sample_payload(hive, sample), timeout)


def upload_network(base_url, key, hive, info, timeout=10.0):
    return _post(base_url.rstrip("/") + "/api/upload-network", key,
                 {"hive": hive, **info}, timeout)
