import itertools
import json
import math
import os
import shutil
import subprocess

import numpy as np
import pytest

import spoofguard as sg

R = 6_378_000.0


def test_haversine_along_meridian():
    assert sg.haversine_distance(10.0, 20.0, 11.0, 20.0) == pytest.approx(R * math.pi / 180.0, rel=1e-12)
    assert sg.haversine_distance(0.0, 0.0, 0.0, 0.0) == 0.0


def test_invalid_coordinates_raise():
    with pytest.raises(sg.Error):
        sg.haversine_distance(91.0, 0.0, 0.0, 0.0)


def test_threshold():
    assert sg.compute_threshold(0.0446, 0.1) == 0.1446


def brute_dtw(a, b):
    best = math.inf
    n, m = len(a), len(b)

    def walk(i, j, acc):
        nonlocal best
        acc += (a[i] - b[j]) ** 2
        if i == n - 1 and j == m - 1:
            best = min(best, acc)
            return
        if i + 1 < n:
            walk(i + 1, j, acc)
        if j + 1 < m:
            walk(i, j + 1, acc)
        if i + 1 < n and j + 1 < m:
            walk(i + 1, j + 1, acc)

    walk(0, 0, 0.0)
    return math.sqrt(best)


def test_dtw_matches_brute_force():
    series = [list(s) for n in (1, 2, 3) for s in itertools.product([0.0, 1.0, 2.0], repeat=n)]
    for a in series:
        for b in series:
            d, path = sg.dtw(np.array(a), np.array(b))
            assert d == pytest.approx(brute_dtw(a, b), abs=1e-12)
            assert path[0] == (0, 0) and path[-1] == (len(a) - 1, len(b) - 1)
    fast, _ = sg.dtw(np.array([0.0, 1.0, 3.0, 1.0]), np.array([0.0, 3.0, 1.0]), radius=4)
    exact, _ = sg.dtw(np.array([0.0, 1.0, 3.0, 1.0]), np.array([0.0, 3.0, 1.0]))
    assert fast == pytest.approx(exact)


def test_knn_majority():
    lobe = np.sin(np.linspace(0.0, math.pi, 20))
    templates = [(200 * lobe, "Right"), (210 * lobe, "Right"), (-200 * lobe, "Left"), (-190 * lobe, "Left")]
    assert sg.knn_classify(195 * lobe, templates) == "Right"
    assert sg.knn_classify(-205 * lobe, templates) == "Left"


def test_simulate_rates_and_determinism():
    a = sg.simulate(5, duration_s=20.0, include_stop=False)
    b = sg.simulate(5, duration_s=20.0, include_stop=False)
    t, lat = a["channels"]["gnss_lat"]
    assert np.allclose(np.diff(t), 1.0 / 120.0)
    ts, _ = a["channels"]["speed"]
    assert np.allclose(np.diff(ts), 1.0 / 100.0)
    assert np.array_equal(lat, b["channels"]["gnss_lat"][1])
    assert "turns" in a["ground_truth"]


def test_config_round_trip():
    cfg = sg.default_config()
    assert cfg["training"]["hidden"] == [128, 64]
    assert sg.config_hash(cfg) == sg.config_hash(None)
    cfg["seed"] = 2
    assert sg.config_hash(cfg) != sg.config_hash(None)
    with pytest.raises(sg.Error):
        sg.config_hash({"sede": 1})


@pytest.mark.skipif(not os.environ.get("SPOOFGUARD_CLI"), reason="needs the spoofguard executable")
def test_detect_on_cli_artifacts(tmp_path):
    cli = os.environ["SPOOFGUARD_CLI"]
    config = {
        "seed": 4,
        "corpus": {"traces": 1, "duration_s": 20},
        "training": {"epochs": 1, "hidden": [6], "window": 5},
        "scenarios": {"per_kind": 1, "clean_runs": 0, "kinds": ["turn_by_turn"]},
    }
    (tmp_path / "config.json").write_text(json.dumps(config))
    run = tmp_path / "run"
    subprocess.run([cli, "pipeline", "--config", str(tmp_path / "config.json"), "--out", str(run)],
                   check=True, capture_output=True)

    info = sg.model_info(str(run / "model" / "model.bin"))
    assert info["hidden"] == [6] and info["window"] == 5 and info["seed"] == 4

    windows = np.random.default_rng(0).uniform(size=(3, 5, 4))
    assert sg.predict_shift(str(run / "model" / "model.bin"), windows).shape == (3,)

    summary = sg.detect(str(run / "scenarios" / "turn_by_turn-000" / "spoofed"), str(run / "model" / "model.bin"),
                        str(run / "model" / "templates"), config)
    on_disk = json.loads((run / "detections" / "turn_by_turn-000" / "summary.json").read_text())
    assert summary["kind"] == "turn_by_turn"
    assert summary["first_alarm_s"] == on_disk["first_alarm_s"]
    shutil.rmtree(run)
