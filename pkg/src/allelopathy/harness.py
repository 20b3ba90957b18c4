"""Experiment runner: phase sweeps, snapshot pixmaps and config-driven runs.

Every run writes its files plus ``manifest.json`` (config hash, seed, version,
per-file sha256) into the output directory. A run that raises leaves a
``FAILED`` file holding the diagnostic next to whatever it had written.

Seed streams. Replicate r of sweep row i uses stream (seed, i, r); a plain
batch is row 0. The cells along the coupled axis of a row share that stream
through thinning, so their outcomes are coupled replicate by replicate;
different rows and replicates use disjoint streams.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .engine import (InvariantViolation, Outcome, classify_outcome, generate_events, generator,
                     sample_initial, seed_sequence, simulate, simulate_coupled, write_ppm)
from .lattice import ConfigError, ModelParams
from .parallel import pmap

OUTCOMES = (Outcome.SPECIES1_WINS, Outcome.SPECIES2_WINS, Outcome.BOTH_EXTINCT, Outcome.COEXIST)

PLANES = {"beta1-gamma": ("beta1", "gamma"), "beta1-beta2": ("beta1", "beta2")}


# sweeps

def _sweep_task(args):
    base, row_name, row_value, axis_name, axis_values, horizon, p1, p2, seed, i, r = args
    row_params = base.replace(**{row_name: row_value})
    plist = [row_params.replace(**{axis_name: a}) for a in axis_values]
    ss = seed_sequence(seed, i, r)
    init = sample_initial(base.L, base.d, p1, p2, ss)
    series = simulate_coupled([init.copy() for _ in plist], plist, horizon, ss)
    return [classify_outcome(s).value for s in series]


@dataclass
class SweepResult:
    plane: str
    row_name: str
    axis_name: str
    row_values: tuple
    axis_values: tuple
    replicates: int
    outcomes: np.ndarray   # object array (rows, axis cells, replicates) of outcome strings

    def frequency(self, outcome: Outcome) -> np.ndarray:
        return np.mean(self.outcomes == outcome.value, axis=2)

    def rows(self):
        for i, rv in enumerate(self.row_values):
            for j, av in enumerate(self.axis_values):
                cell = self.outcomes[i, j]
                counts = [int(np.count_nonzero(cell == o.value)) for o in OUTCOMES]
                yield [rv, av, self.replicates, *counts, *(c / self.replicates for c in counts)]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([self.row_name, self.axis_name, "replicates", "species1_wins",
                        "species2_wins", "both_extinct", "coexist", "f_species1", "f_species2",
                        "f_extinct", "f_coexist"])
            for row in self.rows():
                w.writerow([repr(float(row[0])), repr(float(row[1])), *row[2:7],
                            *(repr(float(v)) for v in row[7:])])

    def critical_estimates(self, outcome: Outcome = Outcome.SPECIES1_WINS) -> list[dict]:
        """Per row: midpoint of the steepest change of the win frequency along the axis.

        An empirical estimate with grid-resolution uncertainty (half the gap);
        NaN when the frequency is flat along the row.
        """
        freq = self.frequency(outcome)
        axis = np.array(self.axis_values, dtype=float)
        order = np.argsort(axis)
        out = []
        for i, rv in enumerate(self.row_values):
            f = freq[i][order]
            a = axis[order]
            if a.size < 2 or not np.any(np.diff(f)):
                out.append({"row": rv, "estimate": math.nan, "half_width": math.nan, "jump": 0.0})
                continue
            k = int(np.argmax(np.abs(np.diff(f))))
            out.append({"row": rv, "estimate": float((a[k] + a[k + 1]) / 2),
                        "half_width": float((a[k + 1] - a[k]) / 2), "jump": float(f[k + 1] - f[k])})
        return out

    def critical_csv(self, path, outcome: Outcome = Outcome.SPECIES1_WINS) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([self.row_name, f"{self.axis_name}_hat", "half_width", "frequency_jump"])
            for e in self.critical_estimates(outcome):
                w.writerow([repr(float(e["row"])), repr(e["estimate"]), repr(e["half_width"]),
                            repr(e["jump"])])


def phase_sweep(plane: str, base: ModelParams, row_values, axis_values, replicates: int,
                horizon: float, seed: int, p1: float = 0.5, p2: float = 0.5,
                workers: int = 1) -> SweepResult:
    """Outcome of every (row, axis cell, replicate) of a parameter plane.

    ``plane`` is "beta1-gamma" (beta2 fixed by ``base``) or "beta1-beta2"
    (gamma fixed). Torus size, dimension and range come from ``base``.
    """
    if plane not in PLANES:
        raise ConfigError(f"plane must be one of {sorted(PLANES)}, got {plane!r}")
    row_values, axis_values = tuple(row_values), tuple(axis_values)
    if not row_values or not axis_values:
        raise ConfigError("sweep grid must be nonempty")
    if replicates < 1:
        raise ConfigError("replicates must be >= 1")
    row_name, axis_name = PLANES[plane]
    tasks = [(base, row_name, rv, axis_name, axis_values, horizon, p1, p2, seed, i, r)
             for i, rv in enumerate(row_values) for r in range(replicates)]
    results = pmap(_sweep_task, tasks, workers)
    out = np.empty((len(row_values), len(axis_values), replicates), dtype=object)
    for (_, _, _, _, _, _, _, _, _, i, r), res in zip(tasks, results):
        out[i, :, r] = res
    return SweepResult(plane, row_name, axis_name, row_values, axis_values, replicates, out)


def stream_fingerprints(seed: int, rows: int, replicates: int, n_words: int = 4) -> dict:
    """First words of the event stream of every (row, replicate)."""
    fp = {}
    for i in range(rows):
        for r in range(replicates):
            ss = seed_sequence(seed, i, r)
            g = generator(np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + (0,)))
            fp[(i, r)] = tuple(g.integers(0, 2 ** 63, size=n_words).tolist())
    return fp


def streams_disjoint(seed: int, rows: int, replicates: int) -> bool:
    """No two (row, replicate) streams share a spawn key or a leading block of output."""
    fp = stream_fingerprints(seed, rows, replicates)
    return len(set(fp.values())) == len(fp)


# batches and snapshots

def _batch_task(args):
    params, horizon, p1, p2, seed, r, sample_times = args
    ss = seed_sequence(seed, 0, r)
    init = sample_initial(params.L, params.d, p1, p2, ss)
    return simulate(init, params, horizon, ss, sample_times=sample_times)


def simulate_batch(params: ModelParams, horizon: float, replicates: int, seed: int,
                   p1: float = 0.5, p2: float = 0.5, sample_times=None, workers: int = 1) -> list:
    tasks = [(params, horizon, p1, p2, seed, r, sample_times) for r in range(replicates)]
    return pmap(_batch_task, tasks, workers)


def snapshot_figure(params: ModelParams, horizon: float, times, seed: int, out_dir,
                    p1: float = 0.5, p2: float = 0.5, replicate: int = 0, initial=None) -> list[Path]:
    """P6 pixmaps of one run at the requested times (species 1 black, species 2 gray)."""
    if params.d != 2:
        raise ConfigError(f"snapshots need d = 2, got d = {params.d}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ss = seed_sequence(seed, 0, replicate)
    init = sample_initial(params.L, params.d, p1, p2, ss) if initial is None else initial
    times = sorted(float(t) for t in times)
    series = simulate(init, params, horizon, ss, snapshot_times=times)
    paths = []
    for t in times:
        path = out_dir / f"snapshot_t{t:g}.ppm"
        write_ppm(series.snapshots[t], path)
        paths.append(path)
    return paths


# config-driven runs

def _sha(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class _Outputs:
    def __init__(self, out_dir: Path):
        self.dir = out_dir
        self.files: list[Path] = []

    def path(self, name: str) -> Path:
        p = self.dir / name
        self.files.append(p)
        return p


def _run_simulate(cfg, out, workers, fmt):
    series = simulate_batch(cfg.params, cfg.horizon, cfg.replicates, cfg.seed, cfg.p1, cfg.p2,
                            cfg.sample_times, workers)
    outcomes = []
    for r, s in enumerate(series):
        s.to_csv(out.path(f"series_r{r}.csv"))
        outcomes.append(classify_outcome(s).value)
    if fmt == "ppm":
        times = cfg.sample_times if cfg.sample_times is not None else (cfg.horizon,)
        for p in snapshot_figure(cfg.params, cfg.horizon, times, cfg.seed, out.dir, cfg.p1, cfg.p2):
            out.files.append(p)
    with open(out.path("outcomes.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replicate", "outcome", "ext_time1", "ext_time2", "n_events"])
        for r, (s, o) in enumerate(zip(series, outcomes)):
            w.writerow([r, o, repr(float(s.extinction_times[0])),
                        repr(float(s.extinction_times[1])), s.n_events])
    return {"outcomes": {o.value: outcomes.count(o.value) for o in OUTCOMES}}


def _run_meanfield(cfg, out, workers, fmt):
    from .meanfield import fixed_points, integrate
    rep = fixed_points(cfg.params)
    rep.to_csv(out.path("fixed_points.csv"))
    summary = {"predicted": rep.predicted, "B0": rep.B0, "B1": rep.B1, "B2": rep.B2,
               "marginal": rep.marginal}
    u0 = cfg.option("u0")
    if u0:
        traj = integrate(u0, cfg.params, cfg.option("T"), n_samples=cfg.option("n_samples"))
        traj.to_csv(out.path("trajectory.csv"))
        summary["limit"] = traj.nearest
        summary["distance"] = traj.distance
    return summary


def _run_basin(cfg, out, workers, fmt):
    from .meanfield import basin_map
    bm = basin_map(cfg.params, cfg.option("resolution"), cfg.option("t_max"), workers=workers)
    bm.to_csv(out.path("basin.csv"))
    return {"area_fractions": bm.summary()}


def _run_sweep(cfg, out, workers, fmt):
    plane, axis = ("beta1-gamma", "gamma_values") if cfg.kind == "sweep-gamma" else ("beta1-beta2", "beta2_values")
    res = phase_sweep(plane, cfg.params, cfg.option("beta1_values"), cfg.option(axis),
                      cfg.replicates, cfg.horizon, cfg.seed, cfg.p1, cfg.p2, workers)
    res.to_csv(out.path("sweep.csv"))
    res.critical_csv(out.path("critical.csv"))
    return {"critical": res.critical_estimates(),
            "streams_disjoint": streams_disjoint(cfg.seed, len(res.row_values), cfg.replicates)}


def _couple_task(args):
    from .couplings import couple_birthrate, couple_gamma, couple_gbt
    kind, params, horizon, p1, p2, seed, r, sample_times, which, lo, hi = args
    ss = seed_sequence(seed, 0, r)
    init = sample_initial(params.L, params.d, p1, p2, ss)
    if kind == "gbt-couple":
        return couple_gbt(init, params, horizon, ss, sample_times)
    fn = couple_gamma if which == "gamma" else couple_birthrate
    return fn(init, params, lo, hi, horizon, ss, sample_times)


def _run_couple(cfg, out, workers, fmt):
    which = lo = hi = None
    if cfg.kind == "mono-couple":
        which, lo, hi = cfg.option("parameter"), cfg.option("lo"), cfg.option("hi")
    tasks = [(cfg.kind, cfg.params, cfg.horizon, cfg.p1, cfg.p2, cfg.seed, r, cfg.sample_times,
              which, lo, hi) for r in range(cfg.replicates)]
    reports = pmap(_couple_task, tasks, workers)
    with open(out.path("coupling.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replicate", "violations", "first_violation", "departures"])
        for r, rep in enumerate(reports):
            w.writerow([r, rep.violations, "" if rep.first_violation is None else rep.first_violation,
                        rep.departures])
    reports[0].to_csv(out.path("coupling_samples_r0.csv"))
    total = sum(rep.violations for rep in reports)
    departures = sum(rep.departures for rep in reports)
    if total or departures:
        raise InvariantViolation(f"coupling broke: {total} ordering violations, {departures} departures from S")
    return {"violations": 0, "departures": 0}


def duality_realization(params: ModelParams, t: float, density: float, seed, symmetric_types=False):
    """One recorded realization: (initial, log) with birth arrows unlabeled."""
    from .lattice import SpatialConfig
    log_params = params.replace(beta2=0.0, gamma=0.0)
    log = generate_events(log_params, t, seed)
    if symmetric_types:
        init = sample_initial(params.L, params.d, density / 2, density / 2, seed)
    else:
        init = sample_initial(params.L, params.d, density, 0.0, seed)
    return SpatialConfig(init.L, init.d, init.states), log


def _duality_task(args):
    from .duality import check_duality_all
    params, t, density, seed, r = args
    init, log = duality_realization(params, t, density, seed_sequence(seed, 0, r))
    ok = check_duality_all(init, log, t)
    return int(ok.size), int(np.count_nonzero(~ok))


def _ancestor_task(args):
    from .duality import UNDETERMINED, first_ancestor, forward_state
    params, t, density, seed, r = args
    init, log = duality_realization(params, t, density, seed_sequence(seed, 0, r), symmetric_types=True)
    fwd = forward_state(init, log, t)
    determined = matches = vacancy_mismatch = extinct = 0
    for x in range(init.n_sites):
        path = first_ancestor(log, x, t)
        pred = UNDETERMINED
        if path.alive and init.states[path.final_site] != 0:
            pred = int(init.states[path.final_site])
        if pred != UNDETERMINED:
            determined += 1
            matches += int(pred == fwd.states[x])
        # a dual that dies out means the site is empty forward in time
        if not path.alive:
            extinct += 1
            vacancy_mismatch += int(fwd.states[x] != 0)
    return init.n_sites, determined, matches, vacancy_mismatch, extinct


def _run_dual(cfg, out, workers, fmt):
    density = cfg.p1 + cfg.p2
    tasks = [(cfg.params, cfg.horizon, density, cfg.seed, r) for r in range(cfg.replicates)]
    if cfg.kind == "duality-check":
        res = pmap(_duality_task, tasks, workers)
        with open(out.path("duality.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["replicate", "sites", "mismatches"])
            for r, (n, bad) in enumerate(res):
                w.writerow([r, n, bad])
        bad = sum(b for _, b in res)
        if bad:
            raise InvariantViolation(f"duality failed at {bad} site(s)")
        return {"sites_checked": sum(n for n, _ in res), "mismatches": 0}
    res = pmap(_ancestor_task, tasks, workers)
    with open(out.path("ancestor.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replicate", "sites", "determined", "matches", "vacancy_mismatches",
                    "dual_extinct"])
        for r, row in enumerate(res):
            w.writerow([r, *row])
    lookahead = cfg.option("lookahead")
    if lookahead > 0:
        from .duality import first_ancestor, renewal_scan
        init, log = duality_realization(cfg.params, cfg.horizon, density,
                                        seed_sequence(cfg.seed, 0, 0), symmetric_types=True)
        path = first_ancestor(log, 0, cfg.horizon)
        renewal_scan(path, log, lookahead)
        path.to_csv(out.path("ancestor_path_r0.csv"), cfg.params.shape)
    det = sum(r[1] for r in res)
    match = sum(r[2] for r in res)
    vac = sum(r[3] for r in res)
    if match != det or vac:
        raise InvariantViolation(f"first ancestor: {det - match} wrong predictions, {vac} vacancy mismatches")
    return {"determined": det, "matches": match, "vacancy_mismatches": vac}


def _run_percolation(cfg, out, workers, fmt):
    from .percolation import estimate_theta, write_theta_csv
    ests = [estimate_theta(p, cfg.params.d, cfg.option("n_max"), cfg.replicates, cfg.seed, workers)
            for p in cfg.option("p_values")]
    write_theta_csv(out.path("theta.csv"), ests)
    return {"theta": {repr(e.p): e.theta_hat for e in ests}}


_RUNNERS = {"simulate": _run_simulate, "meanfield": _run_meanfield, "basin": _run_basin,
            "sweep-gamma": _run_sweep, "sweep-beta": _run_sweep, "gbt-couple": _run_couple,
            "mono-couple": _run_couple, "duality-check": _run_dual, "ancestor-check": _run_dual,
            "percolation": _run_percolation}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


def run(cfg: ExperimentConfig, out_dir=None, workers: int = 1, fmt: str = "csv") -> dict:
    """Run a validated config; returns the manifest (also written as manifest.json)."""
    cfg.validate()
    if fmt not in ("csv", "ppm"):
        raise ConfigError(f"format must be csv or ppm, got {fmt!r}")
    if fmt == "ppm" and (cfg.kind != "simulate" or cfg.params.d != 2):
        raise ConfigError("ppm output is available for the simulate kind with d = 2")
    out = _Outputs(Path(out_dir if out_dir is not None else cfg.out_dir))
    out.dir.mkdir(parents=True, exist_ok=True)
    sentinel = out.dir / "FAILED"
    if sentinel.exists():
        sentinel.unlink()
    cfg_path = out.path("config.ini")
    cfg.save(cfg_path)
    manifest = {"artifact_version": __version__, "kind": cfg.kind, "seed": cfg.seed,
                "config_sha256": cfg.sha256()}
    try:
        summary = _RUNNERS[cfg.kind](cfg, out, workers, fmt)
        manifest["status"] = "ok"
    except Exception as exc:
        summary = {"error": f"{type(exc).__name__}: {exc}"}
        manifest["status"] = "failed"
        sentinel.write_text(summary["error"] + "\n")
        _write_manifest(out, manifest, summary)
        raise
    _write_manifest(out, manifest, summary)
    return manifest


def _write_manifest(out: _Outputs, manifest: dict, summary: dict) -> None:
    manifest["summary"] = _jsonable(summary)
    manifest["outputs"] = [{"file": p.name, "sha256": _sha(p)} for p in out.files if p.exists()]
    with open(out.dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def orphan_files(out_dir) -> list[str]:
    """Files in ``out_dir`` that the manifest does not list (the manifest and sentinel excepted)."""
    out_dir = Path(out_dir)
    with open(out_dir / "manifest.json") as fh:
        listed = {o["file"] for o in json.load(fh)["outputs"]}
    return sorted(f for f in os.listdir(out_dir)
                  if f not in listed and f not in ("manifest.json", "FAILED"))
