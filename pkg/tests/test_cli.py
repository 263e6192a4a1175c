import json
import os
import re
import signal
import socket
import subprocess
import sys
import time
import urllib.request

import pytest
from click.testing import CliRunner

from hivetrack.cli import EXIT_FORMAT, EXIT_IO, EXIT_VALIDATION, cli
from hivetrack.streamio import parse_ground_truth
from hivetrack.simulator import truth_summary
from hivetrack.telemetry import HiveRecordStore

KEY = "abc123XYZ"
T0 = 1_672_531_200


def run(*args):
    result = CliRunner().invoke(cli, [str(a) for a in args], catch_exceptions=False)
    return result


def sample(ts):
    return dict(timestamp=ts, temperature_f=70.0, humidity_pct=50.0, cpu_temp_c=40.0,
                gpu_temp_c=41.0, bees_deck=1, bees_leaving=2, bees_arriving=3,
                avg_size_mm=12.0, pollen_count=0, mite_count=0)


@pytest.fixture
def ideal_run(tmp_path):
    out = tmp_path / "sim"
    r = run("simulate", "--out", out, "--seed", 7, "--ideal", "--n-bees", 15)
    assert r.exit_code == 0, r.output
    return out


def summary_lines(output):
    return [json.loads(line) for line in output.splitlines() if line.startswith("{")]


# -- simulate / track / eval ----------------------------------------------------

def test_simulate_writes_files_and_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run("simulate", "--out", out, "--seed", 3).exit_code == 0
    for name in ("detections.jsonl", "truth.secondary.csv", "truth.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_simulate_no_bees(tmp_path):
    r = run("simulate", "--out", tmp_path, "--n-bees", 0, "--duration", 1)
    assert json.loads(r.output)["total_tracks"] == 0
    assert (tmp_path / "detections.jsonl").read_text().count('"boxes": []') == 10


def test_track_ideal_summary_equals_truth(ideal_run, tmp_path):
    r = run("track", ideal_run / "detections.jsonl", "--out", tmp_path / "out",
            "--secondary", ideal_run / "truth.secondary.csv")
    assert r.exit_code == 0, r.output
    [line] = summary_lines(r.output)
    truth = parse_ground_truth((ideal_run / "truth.csv").read_bytes())
    expected = truth_summary(truth).to_dict()
    assert {k: line[k] for k in expected} == expected
    assert (tmp_path / "out" / "detections.tracks.csv").exists()
    assert json.loads((tmp_path / "out" / "detections.summary.json").read_text()) == expected


def test_track_empty_stream(tmp_path):
    stream = tmp_path / "empty.jsonl"
    stream.write_bytes(b"")
    r = run("track", stream)
    assert r.exit_code == 0
    assert summary_lines(r.output)[0]["total_tracks"] == 0


def test_track_exit_codes(tmp_path):
    r = run("track", tmp_path / "missing.jsonl")
    assert r.exit_code == EXIT_IO and "error:" in r.stderr
    bad = tmp_path / "bad.jsonl"
    bad.write_bytes(b'{"frame": 0, "boxes": [[5, 0, 1, 1, 0.5]]}\n')
    r = run("track", bad)
    assert r.exit_code == EXIT_FORMAT and "line 1" in r.stderr
    good = tmp_path / "good.jsonl"
    good.write_bytes(b"")
    assert run("track", good, "--tolerance", -3).exit_code == EXIT_VALIDATION
    assert run("track", good, "--geometry", "nonsense=1").exit_code == 2
    assert run("track").exit_code == 2


def test_track_geometry_and_config_file(ideal_run, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"geometry": {"arrive_line": 100}, "tolerance": 40}))
    r = run("--config", cfg, "track", ideal_run / "detections.jsonl")
    assert r.exit_code == 0
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run("--config", cfg, "track", ideal_run / "detections.jsonl").exit_code == EXIT_VALIDATION
    cfg.write_text("{not json")
    assert run("--config", cfg, "track", ideal_run / "detections.jsonl").exit_code == EXIT_FORMAT


def test_track_loop_mode(ideal_run, tmp_path):
    stream = ideal_run / "detections.jsonl"
    start = time.monotonic()
    r = run("track", stream, stream, stream, "--interval", 0.05)
    assert r.exit_code == 0, r.output
    assert len(summary_lines(r.output)) == 3
    assert time.monotonic() - start < 5


def test_track_watch_mode(ideal_run, tmp_path):
    watch = tmp_path / "incoming"
    watch.mkdir()
    for name in ("a.jsonl", "b.jsonl"):
        (watch / name).write_bytes((ideal_run / "detections.jsonl").read_bytes())
    r = run("track", "--watch", watch, "--interval", 0.01, "--max-cycles", 4)
    assert r.exit_code == 0, r.output
    assert [s["stream"].rsplit("/", 1)[1] for s in summary_lines(r.output)] == \
        ["a.jsonl", "b.jsonl"]


def test_eval_builtin():
    r = run("eval", "--builtin")
    assert r.exit_code == 0
    assert "average accuracy 0.9628" in r.output or "average accuracy 0.9629" in r.output
    m = re.search(r"average precision (\S+)\s+recall (\S+)\s+f1 (\S+)", r.output)
    got = [float(x) for x in m.groups()]
    assert got == pytest.approx([0.9032, 0.7823, 0.8319], abs=5e-4)


def test_eval_truth_vs_log(ideal_run, tmp_path):
    run("track", ideal_run / "detections.jsonl", "--out", tmp_path)
    r = run("eval", "--truth", ideal_run / "truth.csv", "--log", tmp_path / "detections.tracks.csv",
            "--secondary", ideal_run / "truth.secondary.csv", "--out", tmp_path / "m.csv")
    assert r.exit_code == 0, r.output
    assert "accuracy 1.0000" in r.output
    assert "pollen_accuracy,1.0" in (tmp_path / "m.csv").read_text()


def test_eval_usage_errors(tmp_path):
    assert run("eval").exit_code == 2
    truth = tmp_path / "t.csv"
    truth.write_text("bee_id,final_status,first_frame,last_frame,has_pollen,has_mite\n")
    assert run("eval", "--truth", truth).exit_code == 2
    log = tmp_path / "l.csv"
    log.write_text("id,status,first_frame,last_frame,last_x,last_y,size_mm,snapshots\n")
    # empty truth: undefined metric
    assert run("eval", "--truth", truth, "--log", log).exit_code == EXIT_VALIDATION


# -- report -----------------------------------------------------------------------

@pytest.fixture
def day_store(tmp_path):
    store = HiveRecordStore(tmp_path / "store")
    store.register_hive("hive1", KEY)
    store.upload_batch(KEY, "hive1", [sample(T0 + 300 * i) for i in range(288)])
    store.register_hive("empty", KEY)
    return tmp_path / "store"


def test_report_one_day(day_store, tmp_path):
    out = tmp_path / "rep"
    r = run("report", "--store", day_store, "--hive", "hive1", "--out", out)
    assert r.exit_code == 0, r.output
    csvs = sorted(out.glob("*.csv"))
    assert len(csvs) == 10
    assert len(list(out.glob("*.png"))) == 10
    assert all(len(p.read_text().splitlines()) == 289 for p in csvs)


def test_report_history_mode(day_store, tmp_path):
    out = tmp_path / "rep"
    r = run("report", "--store", day_store, "--hive", "hive1", "--mode", "history",
            "--year", 2023, "--out", out, "--no-plots")
    assert "24 samples" in r.output
    assert len((out / "bees_arriving.csv").read_text().splitlines()) == 25
    assert not list(out.glob("*.png"))


def test_report_empty_store_warns(day_store, tmp_path):
    out = tmp_path / "rep"
    r = run("report", "--store", day_store, "--hive", "empty", "--out", out, "--no-plots")
    assert r.exit_code == 0
    assert "warning" in r.stderr
    assert [len(p.read_text().splitlines()) for p in out.glob("*.csv")] == [1] * 10


def test_report_size_histogram(ideal_run, tmp_path):
    run("track", ideal_run / "detections.jsonl", "--out", tmp_path)
    r = run("report", "--log", tmp_path / "detections.tracks.csv", "--out", tmp_path / "h")
    assert r.exit_code == 0
    assert (tmp_path / "h" / "size_histogram.png").exists()


def test_report_unknown_hive(day_store, tmp_path):
    assert run("report", "--store", day_store, "--hive", "zz", "--out", tmp_path).exit_code \
        == EXIT_VALIDATION


# -- serve ------------------------------------------------------------------------

def start_server(data_dir, key_file, port=0):
    proc = subprocess.Popen(
        [sys.executable, "-m", "hivetrack.cli", "serve", "--port", str(port),
         "--data-dir", str(data_dir), "--key-file", str(key_file), "--admin-key", "admin12345"],
        stderr=subprocess.PIPE, text=True)
    line = proc.stderr.readline()
    m = re.search(r"http://\S+:(\d+)", line)
    assert m, line
    url = f"http://127.0.0.1:{m.group(1)}"
    for _ in range(100):
        try:
            urllib.request.urlopen(url + "/api/health", timeout=1)
            return proc, url
        except OSError:
            time.sleep(0.05)
    proc.kill()
    raise AssertionError("server did not come up")


def stop_server(proc):
    proc.send_signal(signal.SIGINT)
    try:
        proc.wait(timeout=10)
    except subprocess.TimeoutExpired:
        proc.kill()
        proc.wait()


def get_json(url):
    with urllib.request.urlopen(url, timeout=5) as resp:
        return json.loads(resp.read())


@pytest.fixture
def key_file(tmp_path):
    path = tmp_path / "keys.txt"
    path.write_text(f"hive1 {KEY} Demo hive\n")
    return path


def test_serve_upload_query_restart(tmp_path, key_file, ideal_run):
    from hivetrack.telemetry.client import upload_sample

    data = tmp_path / "data"
    proc, url = start_server(data, key_file)
    try:
        health = get_json(url + "/api/health")
        assert health["status"] == "ok" and health["service"] and health["version"]
        assert upload_sample(url, KEY, "hive1", sample(T0))["sequence"] == 1

        # track with live upload
        sensors = tmp_path / "sensors.json"
        sensors.write_text(json.dumps({"temperature_f": 80.0, "humidity_pct": 40.0,
                                       "cpu_temp_c": 50.0, "gpu_temp_c": 49.0}))
        r = run("track", ideal_run / "detections.jsonl", "--telemetry-url", url,
                "--key-file", key_file, "--sensors", sensors)
        assert r.exit_code == 0, r.output
    finally:
        stop_server(proc)

    proc, url = start_server(data, key_file)
    try:
        latest = get_json(url + "/api/get-data?hive=hive1")["sample"]
        assert latest["temperature_f"] == 80.0
        history = get_json(url + "/api/get-data?hive=hive1&mode=history&year=2023")
        assert [s["timestamp"] for s in history["samples"]] == [T0]
    finally:
        stop_server(proc)


def test_serve_port_in_use(tmp_path, key_file):
    sock = socket.socket()
    sock.bind(("127.0.0.1", 0))
    sock.listen(1)
    port = sock.getsockname()[1]
    try:
        proc = subprocess.run(
            [sys.executable, "-m", "hivetrack.cli", "serve", "--port", str(port),
             "--data-dir", str(tmp_path / "d"), "--key-file", str(key_file)],
            capture_output=True, text=True, timeout=30)
    finally:
        sock.close()
    assert proc.returncode == EXIT_IO
    assert "cannot listen" in proc.stderr


def test_serve_env_config(tmp_path, key_file):
    env = dict(os.environ, HIVETRACK_DATA_DIR=str(tmp_path / "envdata"))
    proc = subprocess.Popen(
        [sys.executable, "-m", "hivetrack.cli", "serve", "--port", "0", "--key-file", str(key_file)],
        stderr=subprocess.PIPE, text=True, env=env)
    try:
        line = proc.stderr.readline()
        assert str(tmp_path / "envdata") in line
    finally:
        stop_server(proc)
