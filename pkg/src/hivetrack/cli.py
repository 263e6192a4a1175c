"""``hivetrack`` command line: track, simulate, eval, report, serve.

Exit codes: 0 success, 2 usage error, 3 malformed input file, 4 invalid
values (bad config, undefined metric, rejected sample), 5 I/O or network
failure.
"""
import concurrent.futures
import dataclasses
import json
import logging
import socket
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import click

from . import streamio
from .analytics import associate_secondary, summarize_video
from .evaluation import compare_runs, evaluate
from .exceptions import FormatError, HiveTrackError, TelemetryError
from .geometry import HiveGeometry
from .simulator import SimConfig, generate, truth_summary
from .tracker import BeeTracker

EXIT_OK = 0
EXIT_FORMAT = 3
EXIT_VALIDATION = 4
EXIT_IO = 5

DEFAULT_INTERVAL_S = 330.0

logger = logging.getLogger("hivetrack")


@dataclass
class RunConfig:
    geometry: HiveGeometry = field(default_factory=HiveGeometry)
    threshold_pollen: float = 0.25
    threshold_mite: float = 0.25
    interval_s: float = DEFAULT_INTERVAL_S
    seed: int = 0
    telemetry_url: Optional[str] = None
    key_file: Optional[str] = None
    hive: Optional[str] = None


def _parse_geometry(text, base):
    """``frame_w=640,arrive_line=140`` style overrides of ``base``."""
    if not text:
        return base
    names = {f.name for f in dataclasses.fields(HiveGeometry)}
    updates = {}
    for item in text.split(","):
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep or key not in names:
            raise click.BadParameter(
                f"expected KEY=VALUE with KEY in {sorted(names)}, got {item!r}",
                param_hint="--geometry")
        try:
            updates[key] = float(value)
        except ValueError:
            raise click.BadParameter(f"{key}: not a number: {value!r}",
                                     param_hint="--geometry") from None
    return dataclasses.replace(base, **updates)


def _load_run_config(path):
    cfg = RunConfig()
    if not path:
        return cfg
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except ValueError as exc:
            raise FormatError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise FormatError(f"{path}: expected a JSON object")
    data = dict(data)
    data.pop("serve", None)
    geom = data.pop("geometry", {})
    if "tolerance" in data:
        geom = {**geom, "match_tolerance": data.pop("tolerance")}
    if "interval" in data:
        data["interval_s"] = data.pop("interval")
    known = {f.name for f in dataclasses.fields(RunConfig)} - {"geometry"}
    unknown = set(data) - known
    if unknown:
        raise HiveTrackError(f"{path}: unknown setting(s) {sorted(unknown)}")
    return dataclasses.replace(cfg, geometry=HiveGeometry(**geom), **data)


def _resolve(ctx, geometry=None, tolerance=None, **flags):
    cfg = ctx.obj["config"]
    geom = _parse_geometry(geometry, cfg.geometry)
    if tolerance is not None:
        geom = dataclasses.replace(geom, match_tolerance=tolerance)
    updates = {k: v for k, v in flags.items() if v is not None}
    return dataclasses.replace(cfg, geometry=geom, **updates)


class _Group(click.Group):
    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except HiveTrackError as exc:
            error = exc
            if isinstance(exc, FormatError):
                code = EXIT_FORMAT
            elif type(exc) is TelemetryError:
                # the upload client's transport and remote failures
                code = EXIT_IO
            else:
                code = EXIT_VALIDATION
        except OSError as exc:
            error, code = exc, EXIT_IO
        click.echo(f"error: {error}", err=True)
        ctx.exit(code)


geometry_option = click.option(
    "--geometry", metavar="KEY=VAL[,...]",
    help="Override frame/trigger/work-area geometry, e.g. "
         "'frame_w=640,frame_h=420,arrive_line=140,leave_line=280,"
         "container_w_mm=110,container_h_mm=65'.")
tolerance_option = click.option("--tolerance", type=float,
                                 help="Match radius in pixels (default 50).")


@click.group(cls=_Group)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="JSON config file; command-line flags override it.")
@click.option("-v", "--verbose", count=True)
@click.pass_context
def cli(ctx, config_path, verbose):
    """Hive-entrance bee tracking and hive telemetry."""
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    ctx.ensure_object(dict)
    ctx.obj["config_path"] = config_path
    ctx.obj["config"] = _load_run_config(config_path)


# --------------------------------------------------------------------------
# track

def _track_one(path, cfg, out_dir, secondary_path=None):
    path = Path(path)
    with open(path, "rb") as fh:
        frames = streamio.parse_detection_stream(fh)
        profiles = BeeTracker.from_geometry(cfg.geometry).fit_transform(frames)
    detections = []
    if secondary_path is not None:
        with open(secondary_path, "rb") as fh:
            detections = streamio.parse_secondary(fh)
    flags = associate_secondary(profiles, detections, {
        "Pollen": cfg.threshold_pollen, "Mite": cfg.threshold_mite})
    summary = summarize_video(profiles, flags)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        stem = path.name.split(".")[0]
        with open(out_dir / f"{stem}.tracks.csv", "wb") as fh:
            streamio.write_track_log(profiles, fh)
        with open(out_dir / f"{stem}.summary.json", "w", encoding="utf-8") as fh:
            json.dump(summary.to_dict(), fh, indent=2)
            fh.write("\n")
    return summary


def _summary_sample(summary, sensors, timestamp):
    return {
        "timestamp": int(timestamp),
        **sensors,
        "bees_deck": summary.deck,
        "bees_leaving": summary.leaving,
        "bees_arriving": summary.arriving,
        "avg_size_mm": summary.mean_size_mm,
        "pollen_count": summary.pollen_tracks,
        "mite_count": summary.mite_tracks,
    }


def _hive_key(cfg):
    from .telemetry.store import read_key_file

    if not cfg.key_file:
        raise HiveTrackError("--telemetry-url needs --key-file")
    entries = read_key_file(cfg.key_file)
    hive = cfg.hive
    if hive is None:
        if len(entries) != 1:
            raise HiveTrackError("key file lists several hives; pass --hive")
        hive = next(iter(entries))
    if hive not in entries:
        raise HiveTrackError(f"no key for hive {hive!r} in {cfg.key_file}")
    return hive, entries[hive][0]


@cli.command()
@click.argument("streams", nargs=-1, type=click.Path(dir_okay=False))
@click.option("--out", type=click.Path(file_okay=False), help="Directory for track logs and summaries.")
@geometry_option
@tolerance_option
@click.option("--secondary", type=click.Path(exists=True, dir_okay=False),
              help="Pollen/mite detections for a single stream, keyed by track id.")
@click.option("--threshold-pollen", type=float, help="Pollen confidence threshold (default 0.25).")
@click.option("--threshold-mite", type=float, help="Mite confidence threshold (default 0.25).")
@click.option("--telemetry-url", help="Upload each summary to this telemetry service.")
@click.option("--key-file", type=click.Path(exists=True, dir_okay=False),
              help="File of 'hive_id key' lines.")
@click.option("--hive", help="Hive id to upload as.")
@click.option("--sensors", type=click.Path(exists=True, dir_okay=False),
              help="JSON with temperature_f, humidity_pct, cpu_temp_c, gpu_temp_c for uploads.")
@click.option("--interval", type=float, default=None,
              help="Loop mode: handle one stream per interval seconds (deployment: 330).")
@click.option("--watch", type=click.Path(exists=True, file_okay=False),
              help="Loop mode: pick up new *.jsonl streams from this directory.")
@click.option("--max-cycles", type=int, help="Stop loop mode after this many ticks.")
@click.pass_context
def track(ctx, streams, out, geometry, tolerance, secondary, threshold_pollen, threshold_mite,
          telemetry_url, key_file, hive, sensors, interval, watch, max_cycles):
    """Track detection streams and print one summary per stream."""
    cfg = _resolve(ctx, geometry, tolerance, threshold_pollen=threshold_pollen,
                   threshold_mite=threshold_mite, telemetry_url=telemetry_url,
                   key_file=key_file, hive=hive)
    if secondary and len(streams) != 1:
        raise click.UsageError("--secondary applies to exactly one stream")
    upload = None
    if cfg.telemetry_url:
        from .telemetry.client import upload_sample

        if not sensors:
            raise click.UsageError("--telemetry-url needs --sensors")
        with open(sensors, encoding="utf-8") as fh:
            try:
                sensor_values = json.load(fh)
            except ValueError as exc:
                raise FormatError(f"{sensors}: {exc}") from None
        hive_id, key = _hive_key(cfg)

        def send(summary):
            sample = _summary_sample(summary, sensor_values, time.time())
            return upload_sample(cfg.telemetry_url, key, hive_id, sample)
        upload = send

    def handle(path):
        summary = _track_one(path, cfg, out, secondary)
        click.echo(json.dumps({"stream": str(path), **summary.to_dict()}))
        if upload is not None:
            upload(summary)
        return summary

    if interval is None and watch is None:
        if not streams:
            raise click.UsageError("no streams given")
        for path in streams:
            handle(path)
        return

    # loop mode: stream N is processed in the background while the loop
    # waits for and collects stream N+1
    period = cfg.interval_s if interval is None else interval
    pending = [str(p) for p in streams]
    seen = set(pending)
    cycles = 0
    running = None
    with concurrent.futures.ThreadPoolExecutor(max_workers=1) as pool:
        while max_cycles is None or cycles < max_cycles:
            if watch:
                for p in sorted(map(str, Path(watch).glob("*.jsonl"))):
                    if p not in seen:
                        seen.add(p)
                        pending.append(p)
            if pending:
                if running is not None:
                    running.result()
                running = pool.submit(handle, pending.pop(0))
            elif not watch:
                break
            cycles += 1
            if max_cycles is not None and cycles >= max_cycles:
                break
            if not watch and not pending:
                break
            time.sleep(period)
        if running is not None:
            running.result()


# --------------------------------------------------------------------------
# simulate

@cli.command()
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--seed", type=int)
@click.option("--n-bees", type=int, default=20, show_default=True)
@click.option("--duration", type=float, default=60.0, show_default=True, help="Seconds.")
@click.option("--fps", type=float, default=10.0, show_default=True)
@click.option("--jitter", type=float, help="Positional noise std-dev in px.")
@click.option("--dropout", type=float, help="Per-frame detection miss probability.")
@click.option("--ideal", is_flag=True,
              help="No noise, slow bees, enforced separation: tracking must be exact.")
@geometry_option
@tolerance_option
@click.pass_context
def simulate(ctx, out, seed, n_bees, duration, fps, jitter, dropout, ideal, geometry, tolerance):
    """Write a synthetic detection stream with its ground truth."""
    cfg = _resolve(ctx, geometry, tolerance, seed=seed)
    params = dict(geom=cfg.geometry, seed=cfg.seed, n_bees=n_bees, duration_s=duration, fps=fps)
    if jitter is not None:
        params["jitter_px"] = jitter
    if dropout is not None:
        params["dropout_prob"] = dropout
    sim = SimConfig.ideal(**params) if ideal else SimConfig(**params)
    frames, truth, secondary = generate(sim, with_secondary=True)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "detections.jsonl", "wb") as fh:
        streamio.write_detection_stream(frames, fh)
    # keyed by true bee id, which equals the tracker's id only in the ideal regime
    with open(out / "truth.secondary.csv", "wb") as fh:
        streamio.write_secondary(secondary, fh)
    with open(out / "truth.csv", "wb") as fh:
        streamio.write_ground_truth(truth, fh)
    click.echo(json.dumps({"frames": len(frames), **truth_summary(truth).to_dict()}))


# --------------------------------------------------------------------------
# eval

def _builtin(name):
    return resources.files("hivetrack").joinpath("data", name).read_bytes()


@cli.command("eval")
@click.option("--truth", type=click.Path(exists=True, dir_okay=False), help="Ground-truth CSV.")
@click.option("--log", "log_path", type=click.Path(exists=True, dir_okay=False),
              help="Track log CSV to score against --truth.")
@click.option("--secondary", type=click.Path(exists=True, dir_okay=False),
              help="Pollen/mite detections for the track log.")
@click.option("--counts", type=click.Path(exists=True, dir_okay=False),
              help="Table of per-video arriving/leaving manual vs algorithm counts.")
@click.option("--pollen", type=click.Path(exists=True, dir_okay=False),
              help="Table of per-video pollen counts with false positives/negatives.")
@click.option("--builtin", is_flag=True, help="Score the shipped published count tables.")
@click.option("--threshold-pollen", type=float)
@click.option("--threshold-mite", type=float)
@click.option("--out", type=click.Path(dir_okay=False), help="Write the metrics as CSV.")
@click.pass_context
def eval_cmd(ctx, truth, log_path, secondary, counts, pollen, builtin,
             threshold_pollen, threshold_mite, out):
    """Score tracking output against manual counts."""
    cfg = _resolve(ctx, threshold_pollen=threshold_pollen, threshold_mite=threshold_mite)
    if bool(truth) != bool(log_path):
        raise click.UsageError("--truth and --log go together")
    if not (truth or counts or pollen or builtin):
        raise click.UsageError("nothing to evaluate")
    if truth:
        with open(truth, "rb") as fh:
            records = streamio.parse_ground_truth(fh)
        with open(log_path, "rb") as fh:
            profiles = streamio.parse_track_log(fh)
        flags = None
        if secondary:
            with open(secondary, "rb") as fh:
                flags = associate_secondary(profiles, streamio.parse_secondary(fh), {
                    "Pollen": cfg.threshold_pollen, "Mite": cfg.threshold_mite})
        report = compare_runs(records, profiles, flags, label=Path(log_path).name)
    else:
        videos, pollen_rows = [], []
        if builtin:
            videos = streamio.parse_count_table(_builtin("tracking_counts.csv"))
            pollen_rows = streamio.parse_pollen_table(_builtin("pollen_counts.csv"))
        if counts:
            with open(counts, "rb") as fh:
                videos = streamio.parse_count_table(fh)
        if pollen:
            with open(pollen, "rb") as fh:
                pollen_rows = streamio.parse_pollen_table(fh)
        report = evaluate(videos, pollen_rows)
    for line in report.lines():
        click.echo(line)
    if out:
        Path(out).write_text(report.to_csv(), encoding="utf-8")


# --------------------------------------------------------------------------
# report

@cli.command()
@click.option("--store", "store_dir", type=click.Path(exists=True, file_okay=False),
              help="Telemetry data directory.")
@click.option("--hive", help="Hive id within --store.")
@click.option("--log", "log_path", type=click.Path(exists=True, dir_okay=False),
              help="Track log; reports the bee size histogram.")
@click.option("--mode", type=click.Choice(["all", "history"]), default="all", show_default=True,
              help="'history' keeps one sample per hour of --year.")
@click.option("--year", type=int, help="Year for history mode (default: current UTC year).")
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--no-plots", is_flag=True, help="Skip PNG output.")
def report(store_dir, hive, log_path, mode, year, out, no_plots):
    """Write per-measurement series files and static plots."""
    from .report import write_measurement_series, write_size_histogram
    from .telemetry.store import HiveRecordStore

    if bool(store_dir) == bool(log_path):
        raise click.UsageError("give exactly one of --store or --log")
    if log_path:
        with open(log_path, "rb") as fh:
            profiles = streamio.parse_track_log(fh)
        if not any(p.size_mm is not None for p in profiles):
            click.echo("warning: track log has no sized bees", err=True)
        files = write_size_histogram(profiles, out, plots=not no_plots)
    else:
        if not hive:
            raise click.UsageError("--store needs --hive")
        store = HiveRecordStore(store_dir)
        if mode == "history":
            samples = store.get_history(hive, year or time.gmtime().tm_year)
        else:
            samples = store.samples(hive)
        if not samples:
            click.echo(f"warning: no samples for hive {hive!r}", err=True)
        files = write_measurement_series(samples, out, plots=not no_plots)
        click.echo(f"{len(samples)} samples")
    for path in files:
        click.echo(str(path))


# --------------------------------------------------------------------------
# serve

@cli.command()
@click.option("--host")
@click.option("--port", type=int)
@click.option("--data-dir", type=click.Path(file_okay=False))
@click.option("--key-file", type=click.Path(exists=True, dir_okay=False),
              help="'hive_id key [name]' lines; listed hives are registered at start-up.")
@click.option("--admin-key", help="Key for admin queries (or HIVETRACK_ADMIN_KEY).")
@click.pass_context
def serve(ctx, host, port, data_dir, key_file, admin_key):
    """Run the telemetry HTTP service until interrupted."""
    import uvicorn

    from .telemetry.config import load_service_config
    from .telemetry.service import create_app
    from .telemetry.store import HiveRecordStore, read_key_file

    cfg = load_service_config(ctx.obj["config_path"], host=host, port=port,
                              data_dir=data_dir, key_file=key_file, admin_key=admin_key)
    store = HiveRecordStore(cfg.data_dir)
    if cfg.key_file:
        for hive, (key, name) in read_key_file(cfg.key_file).items():
            store.register_hive(hive, key, name=name)
    sock = socket.socket(socket.AF_INET6 if ":" in cfg.host else socket.AF_INET)
    try:
        sock.bind((cfg.host, cfg.port))
    except OSError as exc:
        sock.close()
        raise OSError(f"cannot listen on {cfg.host}:{cfg.port}: {exc.strerror}") from None
    sock.listen(128)
    host, port = sock.getsockname()[:2]
    click.echo(f"serving on http://{host}:{port} (data: {cfg.data_dir})", err=True)
    server = uvicorn.Server(uvicorn.Config(create_app(store, cfg.admin_key), log_level="warning"))
    server.run(sockets=[sock])


def main(argv=None):
    return cli.main(args=argv, prog_name="hivetrack")


if __name__ == "__main__":
    sys.exit(main())
