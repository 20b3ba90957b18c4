import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from allelopathy.cli import main
from allelopathy.config import KINDS, ExperimentConfig
from allelopathy.engine import Outcome, classify_outcome, read_ppm
from allelopathy.harness import (orphan_files, phase_sweep, run, simulate_batch, snapshot_figure,
                                 streams_disjoint)
from allelopathy.lattice import ConfigError, ModelParams, SpatialConfig

finite = st.floats(0.0, 50.0, allow_nan=False)


@given(finite, finite, finite, st.integers(1, 3), st.integers(5, 40), st.integers(0, 2 ** 64 - 1),
       st.floats(0, 0.5), st.floats(0, 0.5), st.floats(0.1, 1e3),
       st.none() | st.lists(st.floats(0, 0.1), max_size=4).map(tuple))
def test_ini_round_trip(b1, b2, g, d, L, seed, p1, p2, horizon, times):
    cfg = ExperimentConfig("simulate", ModelParams(b1, b2, g, d=d, L=L), p1, p2, horizon, 2, seed,
                           times, "x", {})
    back = ExperimentConfig.from_ini(cfg.to_ini())
    assert back == cfg and back.sha256() == cfg.sha256()


def test_options_round_trip(tmp_path):
    cfg = ExperimentConfig("percolation", ModelParams(1, 1, 0), options={"p_values": "0.5, 0.75",
                                                                         "n_max": "20"})
    cfg.save(tmp_path / "c.ini")
    back = ExperimentConfig.load(tmp_path / "c.ini").validate()
    assert back.option("p_values") == (0.5, 0.75) and back.option("n_max") == 20


@pytest.mark.parametrize("changes,needle", [
    (dict(kind="nope"), "unknown kind"),
    (dict(p1=0.8, p2=0.5), r"p1 \+ p2"),
    (dict(horizon=0.0), "horizon"),
    (dict(replicates=0), "replicates"),
    (dict(sample_times=(1.0, 99.0)), "sample times"),
    (dict(kind="duality-check"), "gamma = 0"),
    (dict(kind="gbt-couple", params=ModelParams(1, 1, 2)), "gamma <= beta1"),
    (dict(kind="sweep-gamma"), "requires option"),
    (dict(options={"bogus": "1"}), "unknown options"),
])
def test_validation_names_precondition(changes, needle):
    cfg = ExperimentConfig("simulate", ModelParams(2, 3, 1)).replace(**changes)
    with pytest.raises(ConfigError, match=needle):
        cfg.validate()


@pytest.mark.parametrize("kind", KINDS)
def test_unknown_option_name_rejected(kind):
    with pytest.raises(ConfigError, match="not defined"):
        ExperimentConfig(kind, ModelParams(2, 3, 0)).option("bogus")


def _write(tmp_path, text, name="c.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


SIM = """[experiment]
kind = simulate
seed = 3
replicates = 2
horizon = 5.0
sample_times = 1, 2

[model]
beta1 = 3.0
beta2 = 3.0
gamma = 1.0
d = 2
L = 12
"""


def test_simulate_run_is_deterministic_with_manifest(tmp_path):
    cfg = _write(tmp_path, SIM)
    for out in ("a", "b"):
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / out), "--workers", "1"]) == 0
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert ma == mb and ma["status"] == "ok" and ma["seed"] == 3
    assert orphan_files(tmp_path / "a") == []
    for o in ma["outputs"]:
        assert (tmp_path / "a" / o["file"]).read_bytes() == (tmp_path / "b" / o["file"]).read_bytes()


def test_worker_count_does_not_change_outputs(tmp_path):
    cfg = _write(tmp_path, SIM)
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "w1"), "--workers", "1"])
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "w2"), "--workers", "2"])
    a = json.loads((tmp_path / "w1" / "manifest.json").read_text())
    b = json.loads((tmp_path / "w2" / "manifest.json").read_text())
    assert a["outputs"] == b["outputs"]


def test_empty_start_reports_both_extinct(tmp_path):
    cfg = ExperimentConfig.from_ini(SIM).replace(p1=0.0, p2=0.0)
    manifest = run(cfg, out_dir=tmp_path)
    assert manifest["summary"]["outcomes"][Outcome.BOTH_EXTINCT.value] == 2


def test_meanfield_csv_contains_p12(tmp_path):
    cfg = _write(tmp_path, "[experiment]\nkind = meanfield\n[model]\nbeta1 = 2\nbeta2 = 2.5\ngamma = 4\n")
    assert main(["meanfield", "--config", cfg, "--out", str(tmp_path / "m")]) == 0
    row = next(line for line in (tmp_path / "m" / "fixed_points.csv").read_text().splitlines()
               if line.startswith("p12,"))
    assert row.split(",")[1:3] == ["0.0625", "0.4375"]


def test_exit_codes(tmp_path):
    cfg = _write(tmp_path, SIM)
    assert main(["meanfield", "--config", cfg, "--out", str(tmp_path / "x")]) == 2
    assert main(["simulate", "--config", str(tmp_path / "missing.ini")]) == 2
    bad = _write(tmp_path, SIM.replace("gamma = 1.0", "gamma = -1"), "bad.ini")
    assert main(["simulate", "--config", bad, "--out", str(tmp_path / "y")]) == 2
    with pytest.raises(SystemExit):
        main(["simulate", "--config", cfg, "--seed", "-1"])


def test_failure_leaves_sentinel(tmp_path, monkeypatch):
    import allelopathy.harness as h

    def boom(*a):
        raise RuntimeError("disk full")

    monkeypatch.setitem(h._RUNNERS, "simulate", boom)
    with pytest.raises(RuntimeError):
        run(ExperimentConfig.from_ini(SIM), out_dir=tmp_path)
    assert "disk full" in (tmp_path / "FAILED").read_text()
    assert json.loads((tmp_path / "manifest.json").read_text())["status"] == "failed"


def test_one_cell_sweep_equals_batch():
    p = ModelParams(3.0, 3.0, 1.0, d=2, L=10)
    sweep = phase_sweep("beta1-gamma", p, [3.0], [1.0], 3, 5.0, seed=11)
    batch = simulate_batch(p, 5.0, 3, seed=11)
    assert sweep.outcomes[0, 0].tolist() == [classify_outcome(s).value for s in batch]


def test_win_frequency_monotone_in_gamma():
    base = ModelParams(2.0, 3.0, 0.0, d=2, L=12)
    res = phase_sweep("beta1-gamma", base, [2.0], [0.0, 2.0, 8.0, 30.0], 6, 30.0, seed=5)
    f = res.frequency(Outcome.SPECIES1_WINS)[0]
    assert np.all(np.diff(f) >= 0)
    rows = res.critical_estimates()
    assert rows[0]["half_width"] > 0


def test_species1_favoured_when_faster_without_allelopathy():
    base = ModelParams(4.0, 3.0, 0.0, d=2, L=12)
    res = phase_sweep("beta1-beta2", base, [4.0, 6.0], [3.0], 8, 40.0, seed=9)
    f1 = res.frequency(Outcome.SPECIES1_WINS)
    f2 = res.frequency(Outcome.SPECIES2_WINS)
    assert np.all(f1 >= f2)


def test_sweep_rejects_bad_input():
    with pytest.raises(ConfigError):
        phase_sweep("gamma-gamma", ModelParams(1, 1, 0), [1], [1], 1, 1.0, 0)
    with pytest.raises(ConfigError):
        phase_sweep("beta1-gamma", ModelParams(1, 1, 0), [], [1], 1, 1.0, 0)


def test_streams_disjoint():
    assert streams_disjoint(0, 6, 10)
    assert streams_disjoint(2 ** 64 - 1, 3, 3)


def test_snapshots(tmp_path):
    p = ModelParams(2.0, 2.0, 0.0, d=2, L=16)
    full = SpatialConfig.from_array(np.ones((16, 16)))
    paths = snapshot_figure(p, 1e-9, [0.0], 0, tmp_path, initial=full)
    img = read_ppm(paths[0])
    assert img.shape == (16, 16, 3) and np.all(img == 0)
    with pytest.raises(ConfigError):
        snapshot_figure(ModelParams(2, 2, 0, d=1, L=16), 1.0, [0.5], 0, tmp_path)


def test_flat_row_has_no_critical_estimate():
    res = phase_sweep("beta1-gamma", ModelParams(0.5, 0.5, 0.0, d=1, L=10), [0.5], [0.0, 1.0], 2, 5.0, 0)
    est = res.critical_estimates()[0]
    assert np.isnan(est["estimate"]) and est["jump"] == 0.0
