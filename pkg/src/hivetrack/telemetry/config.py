"""Service configuration: defaults, then the ``"serve"`` section of a JSON
config file, then ``HIVETRACK_*`` environment variables, then explicit
overrides."""
import json
import os
from dataclasses import dataclass, fields, replace
from typing import Optional

from ..exceptions import InvalidInputError

ENV_PREFIX = "HIVETRACK_"


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    data_dir: str = "hive-data"
    key_file: Optional[str] = None
    admin_key: Optional[str] = None


def load_service_config(path=None, env=None, **overrides):
    env = os.environ if env is None else env
    cfg = ServiceConfig()
    names = {f.name for f in fields(ServiceConfig)}
    if path:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise InvalidInputError(f"{path}: expected a JSON object")
        section = data.get("serve", {})
        if not isinstance(section, dict):
            raise InvalidInputError(f"{path}: \"serve\" must be a JSON object")
        unknown = set(section) - names
        if unknown:
            raise InvalidInputError(f"{path}: unknown setting(s) {sorted(unknown)}")
        cfg = replace(cfg, **section)
    from_env = {n: env[ENV_PREFIX + n.upper()] for n in names if ENV_PREFIX + n.upper() in env}
    cfg = replace(cfg, **from_env)
    cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    try:
        port = int(cfg.port)
    except (TypeError, ValueError):
        raise InvalidInputError(f"port must be an integer, got {cfg.port!r}") from None
    if not 0 <= port <= 65535:
        raise InvalidInputError(f"port out of range: {port}")
    return replace(cfg, port=port)
