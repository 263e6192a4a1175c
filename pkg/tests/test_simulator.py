import io

import numpy as np
import pytest

from hivetrack.analytics import VideoSummary, associate_secondary, summarize_video
from hivetrack.exceptions import InvalidInputError
from hivetrack.geometry import DetectionBox, HiveGeometry
from hivetrack.simulator import SimConfig, _Bee, _clip, _truth, _walk, generate, truth_summary
from hivetrack.streamio import (GroundTruthRecord, write_detection_stream,
                                write_ground_truth)
from hivetrack.tracker import FrameDetections, TrackStatus, track


def test_no_bees():
    frames, truth = generate(SimConfig(n_bees=0, duration_s=2))
    assert truth == []
    assert len(frames) == 20
    assert all(f.boxes == () for f in frames)


def test_monotone_walk_hand_traced():
    geom = HiveGeometry()
    path = _walk([(320.0, 400.0), (320.0, 20.0)], speed=10.0)
    assert path[0, 1] == 400 and path[-1, 1] == 20
    length, width = 12 * geom.px_per_mm_y, 5 * geom.px_per_mm_x
    bee = _Bee(0, path, path, length, width, False, False)
    record, crossings = _truth(1, bee, SimConfig())
    # y = 400 - 10 t: 290 -> 280 at t = 12 enters the deck, 150 -> 140 at
    # t = 26 arrives
    assert record.final_status is TrackStatus.ARRIVING
    assert crossings == [12, 26]
    assert record.size_mm == pytest.approx(12.0)

    frames = [FrameDetections(t, (DetectionBox(*_clip(cx, cy, length, width, geom)),))
              for t, (cx, cy) in enumerate(path)]
    [prof] = track(frames)
    assert prof.status is TrackStatus.ARRIVING
    assert prof.size_mm == pytest.approx(12.0)


def test_single_bottom_to_top_bee():
    base = dict(n_bees=1, spawn_probs=(0.0, 1.0, 0.0), turnback_prob=0.0, loiter_prob=0.0,
                jitter_px=0.0, dropout_prob=0.0, duration_s=120)
    checked = 0
    for seed in range(20):
        cfg = SimConfig(seed=seed, **base)
        frames, [rec] = generate(cfg)
        if rec.last_frame == cfg.n_frames - 1:
            continue  # cut off by the end of the video
        checked += 1
        assert rec.final_status is TrackStatus.ARRIVING
        [prof] = track(frames)
        assert prof.status is TrackStatus.ARRIVING
    assert checked >= 5


def _bytes(frames, truth):
    a, b = io.BytesIO(), io.BytesIO()
    write_detection_stream(frames, a)
    write_ground_truth(truth, b)
    return a.getvalue(), b.getvalue()


def test_deterministic_bytes():
    cfg = SimConfig(seed=42, n_bees=30)
    assert _bytes(*generate(cfg)) == _bytes(*generate(cfg))
    assert _bytes(*generate(cfg)) != _bytes(*generate(SimConfig(seed=43, n_bees=30)))


@pytest.mark.parametrize("seed", range(5))
def test_truth_conserves_spawned_bees(seed):
    cfg = SimConfig(seed=seed, n_bees=25)
    frames, truth = generate(cfg)
    assert truth_summary(truth).total_tracks == 25
    assert [r.bee_id for r in truth] == list(range(1, 26))
    # without dropout every visible bee-frame is one box
    cfg = SimConfig(seed=seed, n_bees=25, dropout_prob=0.0)
    frames, truth = generate(cfg)
    assert sum(len(f.boxes) for f in frames) == sum(r.last_frame - r.first_frame + 1
                                                    for r in truth)


def test_dropout_drops_superset():
    low, _ = generate(SimConfig(seed=3, dropout_prob=0.05, jitter_px=0.0))
    high, _ = generate(SimConfig(seed=3, dropout_prob=0.2, jitter_px=0.0))
    for a, b in zip(low, high):
        assert set(b.boxes) <= set(a.boxes)


def test_boxes_inside_frame():
    geom = HiveGeometry()
    frames, _ = generate(SimConfig(seed=5, n_bees=40, jitter_px=5.0))
    for f in frames:
        for b in f.boxes:
            assert 0 <= b.min_x <= b.max_x <= geom.frame_w
            assert 0 <= b.min_y <= b.max_y <= geom.frame_h


def test_all_statuses_exercised():
    seen = set()
    for seed in range(5):
        _, truth = generate(SimConfig(seed=seed, n_bees=40))
        seen |= {r.final_status for r in truth}
    assert seen == set(TrackStatus)


def test_secondary_detections_reference_true_snapshots():
    frames, truth, secondary = generate(SimConfig.ideal(seed=2, pollen_prob=0.5, mite_prob=0.5),
                                        with_secondary=True)
    assert secondary
    profiles = track(frames)
    flags = associate_secondary(profiles, secondary)
    assert summarize_video(profiles, flags) == truth_summary(truth)


def test_ideal_separation_respected():
    cfg = SimConfig.ideal(seed=4, n_bees=25)
    frames, _ = generate(cfg)
    for f in frames:
        mids = np.array([[(b.min_x + b.max_x) / 2, (b.min_y + b.max_y) / 2] for b in f.boxes])
        if len(mids) > 1:
            d = np.hypot(*(mids[:, None, :] - mids[None, :, :]).transpose(2, 0, 1))
            assert d[np.triu_indices(len(mids), 1)].min() > cfg.geom.match_tolerance


@pytest.mark.parametrize("bad", [dict(fps=0), dict(dropout_prob=1.5), dict(n_bees=-1),
                                 dict(spawn_probs=(0.5, 0.5, 0.5)), dict(jitter_px=-1),
                                 dict(speed_px_per_frame=(5, 1)), dict(seed=1.5)])
def test_config_validation(bad):
    with pytest.raises(InvalidInputError):
        SimConfig(**bad)


def test_truth_summary_examples():
    truth = [GroundTruthRecord(1, TrackStatus.ARRIVING, 0, 1, False, False),
             GroundTruthRecord(2, TrackStatus.ARRIVING, 0, 1, False, False),
             GroundTruthRecord(3, TrackStatus.LEAVING, 0, 1, False, False)]
    s = truth_summary(truth)
    assert (s.arriving, s.leaving, s.deck, s.new) == (2, 1, 0, 0)
    assert truth_summary([]) == VideoSummary()


def _count_error(dropout, seeds):
    total = 0
    for seed in seeds:
        frames, truth = generate(SimConfig(seed=seed, dropout_prob=dropout, jitter_px=1.5))
        got, want = summarize_video(track(frames)), truth_summary(truth)
        total += abs(got.arriving - want.arriving) + abs(got.leaving - want.leaving)
    return total / len(seeds)


def test_degradation_monotone_in_dropout():
    seeds = range(50)
    errors = [_count_error(p, seeds) for p in (0.0, 0.05, 0.1, 0.2)]
    assert errors == sorted(errors)
    assert errors[-1] > errors[0]
