import json
import os

import numpy as np
import pytest

import dtmpc

SMOKE = os.path.join(os.path.dirname(__file__), "..", "..", "tests", "data", "smoke_config.json")


def test_event_times_cover_one_period():
    t = dtmpc.event_times(dtmpc.PhaseShiftCommand(0.3, 0.2, 0.1))
    assert len(t) == 8
    assert t == sorted(t)
    assert 0.0 <= t[0] and t[-1] < 10e-6


def test_zero_phase_shift_cycle_is_exact_and_finite():
    model = dtmpc.ConverterModel()
    assert model.nominal_load == pytest.approx(0.576)
    states = model.simulate_cycle(np.array([0.0, 48.0, 0.0]), dtmpc.PhaseShiftCommand(0.2, 0.1, 0.15), 0.576)
    assert len(states) == 9
    assert all(np.all(np.isfinite(s)) for s in states)
    doc = json.loads(model.model_json(0.576))
    assert doc["format_version"] == 1
    assert len(doc["lut"]) == 16


def test_sso_on_sphere():
    c = np.array([0.6, 0.4, 0.5])
    r = dtmpc.optimize_sso(lambda u: float(np.sum((u - c) ** 2)), np.full(3, 0.25), max_evals=200)
    assert r["best_cost"] < 1e-6
    assert r["evaluations"] <= 200
    assert r["trace"]["phase"][0] == "init"


def test_errors_map_to_python_exceptions(tmp_path):
    with pytest.raises(dtmpc.InputError):
        dtmpc.ConverterModel("V1 a 0 1\nR1 a 0 1\n")
    with pytest.raises(ValueError):
        dtmpc.config_json(str(tmp_path / "missing.json"))
    h = dtmpc.Harness(SMOKE, out=str(tmp_path))
    with pytest.raises(dtmpc.MissingArtifactError):
        h.eval_nsp()


def test_smoke_pipeline(tmp_path):
    h = dtmpc.Harness(SMOKE, seed=3, out=str(tmp_path))
    h.synth()
    h.train_nsp()
    assert np.isfinite(h.eval_nsp()["cycle_ratio_rms"])
    points = {r["name"]: r["points_per_cycle"] for r in h.bench_solvers()}
    assert points["ode1_euler"] == 200 and points["nsp"] == 8
    assert len(h.run_scenarios()) == 4
    report = json.loads(open(h.report()).read())
    assert report["seed"] == 3
