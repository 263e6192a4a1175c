"""HTTP front end for :class:`~hivetrack.telemetry.store.HiveRecordStore`.

Endpoints (JSON in, JSON out; the hive's key goes in the ``X-Auth-Key``
header):

    POST /api/upload-data       {"hive": ID, <HiveSample fields>}
    POST /api/upload-network    {"hive": ID, <descriptor fields>}
    POST /api/upload-video      ?hive=ID, body discarded
    GET  /api/get-data          ?hive=ID&mode=latest|history&year=Y
    GET  /api/admin/network     ?hive=ID, X-Auth-Key = admin key
    GET  /api/health
"""
import hmac
import json
import time

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.concurrency import run_in_threadpool

from ..exceptions import (AuthorizationError, HiveNotFoundError, InvalidInputError,
                          OrderingError, SampleValidationError)
from .store import HiveSample

SERVICE_NAME = "hivetrack-telemetry"
AUTH_HEADER = "X-Auth-Key"

_STATUS = [
    (AuthorizationError, 401),
    (HiveNotFoundError, 404),
    (OrderingError, 409),
    (SampleValidationError, 422),
    (InvalidInputError, 400),
]


def _error(exc):
    for cls, code in _STATUS:
        if isinstance(exc, cls):
            body = {"error": cls.__name__, "detail": str(exc)}
            if isinstance(exc, SampleValidationError):
                body["fields"] = exc.fields
            return JSONResponse(body, status_code=code)
    raise exc


async def _json_object(request):
    try:
        data = json.loads(await request.body())
    except ValueError:
        raise InvalidInputError("body is not valid JSON") from None
    if not isinstance(data, dict):
        raise InvalidInputError("body must be a JSON object")
    return data


def _split_hive(data):
    data = dict(data)
    hive = data.pop("hive", None)
    if not isinstance(hive, str):
        raise InvalidInputError('payload needs a string "hive" field')
    return hive, data


def create_app(store, admin_key=None, version="0.1.0"):
    app = FastAPI(title=SERVICE_NAME, version=version)
    started = time.time()

    @app.get("/api/health")
    def health():
        return {"status": "ok", "service": SERVICE_NAME, "version": version,
                "hives": len(store.hives()), "uptime_s": round(time.time() - started, 3)}

    @app.post("/api/upload-data")
    async def upload_data(request: Request):
        try:
            hive, fields = _split_hive(await _json_object(request))
            key = request.headers.get(AUTH_HEADER, "")
            ack = await run_in_threadpool(store.upload_data, key, hive, fields)
        except Exception as exc:  # mapped to HTTP codes, unknown errors re-raised
            return _error(exc)
        return {"status": "ok", "hive": ack.hive, "sequence": ack.sequence}

    @app.post("/api/upload-network")
    async def upload_network(request: Request):
        try:
            hive, info = _split_hive(await _json_object(request))
            key = request.headers.get(AUTH_HEADER, "")
            await run_in_threadpool(store.upload_network, key, hive, info)
        except Exception as exc:
            return _error(exc)
        return {"status": "ok", "hive": hive}

    @app.post("/api/upload-video")
    async def upload_video(request: Request, hive: str):
        try:
            await run_in_threadpool(store.authorize, request.headers.get(AUTH_HEADER, ""), hive)
        except Exception as exc:
            return _error(exc)
        size = 0
        async for chunk in request.stream():
            size += len(chunk)
        return {"status": "accepted", "hive": hive, "bytes": size, "stored": False}

    @app.get("/api/get-data")
    async def get_data(hive: str, mode: str = "latest", year: int = None):
        try:
            if mode == "history" and year is None:
                year = time.gmtime().tm_year
            result = await run_in_threadpool(store.get_data, hive, mode, year)
        except Exception as exc:
            return _error(exc)
        if mode == "latest":
            return {"hive": hive, "mode": mode,
                    "sample": None if result is None else result.to_dict()}
        return {"hive": hive, "mode": mode, "year": year,
                "samples": [s.to_dict() for s in result]}

    @app.get("/api/admin/network")
    async def admin_network(request: Request, hive: str):
        given = request.headers.get(AUTH_HEADER, "").encode()
        if admin_key is None or not hmac.compare_digest(admin_key.encode(), given):
            return _error(AuthorizationError("admin key required"))
        try:
            info = await run_in_threadpool(store.get_network, hive)
        except Exception as exc:
            return _error(exc)
        return {"hive": hive, "network": info}

    return app


def sample_payload(hive, sample):
    """Request body for ``/api/upload-data``."""
    if not isinstance(sample, HiveSample):
        sample = HiveSample.from_dict(sample)
    return {"hive": hive, **sample.to_dict()}
