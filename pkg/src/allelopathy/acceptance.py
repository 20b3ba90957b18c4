"""Acceptance criteria as functions.

Each ``criterion_N(seed, workers)`` returns a CriterionResult whose ``payload``
is the primary output (plain JSON data) and whose ``digest`` is the sha256 of
that payload's canonical serialization; ``run_all`` also writes the payloads
to disk. Timing is reported but kept out of the payload so digests compare
across worker counts.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from gmpy2 import mpq
from scipy.linalg import expm

from .couplings import GBT_TABLE, LABELS, S_STATES, couple_birthrate, couple_gamma, couple_gbt, gbt_rule
from .engine import sample_initial, seed_sequence, simulate
from .harness import _ancestor_task, _duality_task, phase_sweep
from .lattice import ModelParams, SpatialConfig
from .meanfield import (Rates, basin_map, dulac_divergence, dulac_divergence_fd, fixed_points,
                        integrate, jacobian, regions)
from .parallel import pmap
from .percolation import estimate_theta, wet_nested

# frozen base seeds, one per criterion
SEEDS = {1: 1001, 2: 1001, 3: 1003, 4: 1004, 5: 1005, 6: 1006, 7: 1006, 8: 1008, 9: 1009,
         10: 1010, 11: 1011}

BUDGET_S = {1: 5, 2: 5, 3: 120, 4: 30, 5: 120, 6: 60, 7: 60, 8: 60, 9: 120, 10: 1800, 11: 60}


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    payload: dict = field(default_factory=dict)
    seconds: float = 0.0

    @property
    def digest(self) -> str:
        return hashlib.sha256(canonical(self.payload)).hexdigest()

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} criterion {self.number:2d} {self.title}: {self.detail} [{self.seconds:.1f} s]"


def canonical(obj) -> bytes:
    def fix(x):
        if isinstance(x, dict):
            return {str(k): fix(v) for k, v in x.items()}
        if isinstance(x, (list, tuple)):
            return [fix(v) for v in x]
        if isinstance(x, (bool, np.bool_)):
            return bool(x)
        if isinstance(x, (int, np.integer)):
            return int(x)
        if isinstance(x, (float, np.floating)):
            return repr(float(x))
        return x
    return json.dumps(fix(obj), sort_keys=True, separators=(",", ":")).encode()


def _timed(fn):
    def wrapper(seed=None, workers=1):
        t0 = time.perf_counter()
        res = fn(SEEDS.get(int(fn.__name__.split("_")[1])) if seed is None else seed, workers)
        res.seconds = time.perf_counter() - t0
        budget = BUDGET_S.get(res.number)
        if budget is not None and res.seconds > budget:
            res.passed = False
            res.detail += f"; over the {budget} s budget"
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def random_rates(seed: int, n: int = 10_000):
    """beta1, beta2 uniform on (0, 5], gamma uniform on (0, 10]."""
    rng = np.random.default_rng(seed)
    u = 1.0 - rng.random((n, 3))
    return [Rates(5 * a, 5 * b, 10 * c) for a, b, c in u]


# mean field

@_timed
def criterion_1(seed, workers):
    draws = random_rates(seed)
    worst_exact = worst_inside = 0.0
    outside_float = membership_bad = 0
    flags = []
    for r in draws:
        rep = fixed_points(r)
        for fp in rep.points.values():
            if fp.u is None:
                continue
            worst_exact = max(worst_exact, fp.residual)
            if fp.in_simplex:
                worst_inside = max(worst_inside, fp.residual_float)
            elif fp.residual_float > 1e-12:
                outside_float += 1
        # membership from the exact coordinates against the inequality
        ex = rep["p12"].exact
        inside_exact = ex is not None and ex.u1 > 0 and ex.u2 > 0 and ex.u1 + ex.u2 < 1
        b1, b2, g = mpq(r.beta1), mpq(r.beta2), mpq(r.gamma)
        ineq = b1 < b2 < (1 + g) * b1 - g
        membership_bad += int(inside_exact != ineq or rep["p12"].in_simplex != ineq)
        flags.append(bool(ineq))
    ok = worst_exact <= 1e-12 and worst_inside <= 1e-12 and membership_bad == 0
    detail = (f"max exact residual {worst_exact:.1e}, max float64 residual inside simplex "
              f"{worst_inside:.1e}, p12 membership mismatches {membership_bad}/{len(draws)}; "
              f"float64 residual > 1e-12 at {outside_float} out-of-simplex point(s)")
    return CriterionResult(1, "mean-field fixed points", ok, detail,
                           {"worst_exact": worst_exact, "worst_inside": worst_inside,
                            "outside_float": outside_float, "p12_inside": flags})


@_timed
def criterion_2(seed, workers):
    draws = random_rates(seed)
    mismatches = det_bad = marginal = interior = 0
    for r in draws:
        reg = regions(r)
        if reg["marginal"]:
            marginal += 1
            continue
        rep = fixed_points(r, exact=False)
        for name, key in (("p0", "B0"), ("p1", "B1"), ("p2", "B2")):
            fp = rep[name]
            stable = fp.u is not None and bool(np.all(np.real(fp.eigenvalues) < 0))
            mismatches += int(stable != reg[key])
        if rep["p12"].in_simplex:
            interior += 1
            det = float(np.linalg.det(jacobian(rep["p12"].u, r)))
            det_bad += int(not det < 0)
    ok = mismatches == 0 and det_bad == 0
    detail = (f"{mismatches} stability/region mismatches over {len(draws) - marginal} "
              f"non-marginal draws; det J(p12) >= 0 on {det_bad}/{interior} interior draws")
    return CriterionResult(2, "stability vs regions", ok, detail,
                           {"mismatches": mismatches, "det_bad": det_bad, "marginal": marginal,
                            "interior": interior})


@_timed
def criterion_3(seed, workers):
    params = Rates(2.0, 2.5, 4.0)
    a = integrate((0.4, 0.05), params, 500.0)
    b = integrate((0.05, 0.4), params, 500.0)
    da = math.dist(a.terminal, (0.5, 0.0))
    db = math.dist(b.terminal, (0.0, 0.6))
    m4 = basin_map(params, 200, workers=workers)
    m8 = basin_map(Rates(2.0, 2.5, 8.0), 200, workers=workers)
    f4, f8 = m4.area_fraction("p1"), m8.area_fraction("p1")
    undecided = sum(lab not in ("p0", "p1", "p2", "p12") for lab in m4.labels + m8.labels)
    ok = da < 1e-6 and db < 1e-6 and f8 >= f4
    detail = (f"|u(500) - p1| = {da:.1e}, |u(500) - p2| = {db:.1e}; p1 basin area "
              f"{f4:.4f} (gamma=4) vs {f8:.4f} (gamma=8); undecided cells {undecided}")
    return CriterionResult(3, "bistability and basins", ok, detail,
                           {"terminal_a": list(a.terminal), "terminal_b": list(b.terminal),
                            "labels_4": m4.labels, "labels_8": m8.labels})


@_timed
def criterion_4(seed, workers):
    rng = np.random.default_rng(seed)
    grid = np.arange(1, 101) / 101
    pts = [(x, y) for x in grid for y in grid if x + y < 1]
    worst_fd = 0.0
    max_div = -math.inf
    for _ in range(50):
        b1, b2 = 5 * (1 - rng.random(2))
        r = Rates(b1, b2, 10 * (1 - rng.random()))
        for u in pts:
            cf = dulac_divergence(u, r)
            fd = dulac_divergence_fd(u, r)
            max_div = max(max_div, cf)
            worst_fd = max(worst_fd, abs(fd - cf) / max(1.0, abs(cf)))
    ok = max_div < 0 and worst_fd <= 1e-6
    detail = (f"max divergence {max_div:.3g} over {len(pts)} interior points x 50 draws; "
              f"worst finite-difference deviation {worst_fd:.1e} (relative to max(1, |div|))")
    return CriterionResult(4, "Dulac negativity", ok, detail,
                           {"max_div": max_div, "worst_fd": worst_fd, "n_points": len(pts)})


# exact small-instance oracle

def ctmc_generator(L: int, beta1: float, beta2: float, gamma: float) -> np.ndarray:
    """Generator on {0,1,2}^L (1D torus, nearest neighbours) built from the per-site rates.

    State index: sum of s[k] * 3**k. Written from the rate definitions alone.
    """
    n = 3 ** L
    Q = np.zeros((n, n))
    for idx in range(n):
        s = [(idx // 3 ** k) % 3 for k in range(L)]
        for x in range(L):
            nb = [s[(x - 1) % L], s[(x + 1) % L]]
            f1, f2 = nb.count(1) / 2, nb.count(2) / 2
            if s[x] == 0:
                moves = {1: beta1 * f1, 2: beta2 * f2}
            elif s[x] == 1:
                moves = {0: 1.0}
            else:
                moves = {0: 1.0 + gamma * f1}
            for new, rate in moves.items():
                if rate > 0:
                    j = idx + (new - s[x]) * 3 ** x
                    Q[idx, j] += rate
                    Q[idx, idx] -= rate
    return Q


def state_index(states) -> int:
    return int(sum(int(v) * 3 ** k for k, v in enumerate(states)))


def _ctmc_block(args):
    params, init_states, t, seed, lo, hi = args
    init = SpatialConfig.from_array(np.array(init_states, dtype=np.int8))
    counts = np.zeros(3 ** params.L, dtype=np.int64)
    for r in range(lo, hi):
        s = simulate(init, params, t, seed_sequence(seed, 0, r))
        counts[state_index(s.final.states)] += 1
    return counts


def ctmc_empirical(params: ModelParams, init_states, t: float, reps: int, seed: int,
                   workers: int = 1, block: int = 2000) -> np.ndarray:
    tasks = [(params, tuple(init_states), t, seed, lo, min(lo + block, reps))
             for lo in range(0, reps, block)]
    return np.sum(pmap(_ctmc_block, tasks, workers), axis=0)


@_timed
def criterion_5(seed, workers):
    params = ModelParams(1.5, 2.0, 1.0, M=1.0, d=1, L=4)
    init = (1, 0, 2, 0)
    Q = ctmc_generator(4, 1.5, 2.0, 1.0)
    exact = expm(Q * 1.0)[state_index(init)]
    reps = 100_000
    counts = ctmc_empirical(params, init, 1.0, reps, seed, workers)
    tv = 0.5 * float(np.abs(counts / reps - exact).sum())
    expected = 0.5 * float(np.sum(np.sqrt(2 * exact * (1 - exact) / (math.pi * reps))))
    ok = tv < 0.01
    detail = f"TV = {tv:.4f} over 81 states (sampling-noise scale ~{expected:.4f}), threshold 0.01"
    return CriterionResult(5, "exact CTMC oracle", ok, detail,
                           {"counts": counts.tolist(), "tv": tv})


# couplings

def _coupling_task(args):
    which, seed, r = args
    ss = seed_sequence(seed, 0, r)
    times = np.arange(0.0, 20.0 + 1e-9, 1.0)
    if which == "gamma":
        p = ModelParams(2.0, 3.0, 0.5, d=1, L=50)
        rep = couple_gamma(sample_initial(50, 1, 0.4, 0.4, ss), p, 0.5, 2.0, 20.0, ss, times)
    elif which == "beta2":
        p = ModelParams(2.0, 2.0, 1.0, d=1, L=50)
        rep = couple_birthrate(sample_initial(50, 1, 0.4, 0.4, ss), p, 2.0, 3.0, 20.0, ss, times)
    else:
        p = ModelParams(2.0, 3.0, 1.0, d=1, L=50)
        rep = couple_gbt(sample_initial(50, 1, 0.4, 0.4, ss), p, 20.0, ss, times)
    twos = all(row.get("twos_dominate", True) for row in rep.samples)
    return {"which": which, "replicate": r, "violations": rep.violations,
            "first": rep.first_violation, "departures": rep.departures, "twos_dominate": twos,
            "visited": sorted(rep.visited), "ones": [row["ones_low"] for row in rep.samples]}


def _coupling_runs(seed, workers):
    tasks = [(w, seed, r) for w in ("gamma", "beta2", "gbt") for r in range(100)]
    return pmap(_coupling_task, tasks, workers)


@_timed
def criterion_6(seed, workers):
    runs = _coupling_runs(seed, workers)
    by = {w: [x for x in runs if x["which"] == w] for w in ("gamma", "beta2", "gbt")}
    viol = {w: sum(x["violations"] for x in v) for w, v in by.items()}
    dep = sum(x["departures"] for x in by["gbt"])
    ok = all(v == 0 for v in viol.values()) and dep == 0
    detail = (f"ordering violations gamma/beta2/gbt = {viol['gamma']}/{viol['beta2']}/{viol['gbt']}, "
              f"departures from S = {dep} over 100 seeds each")
    return CriterionResult(6, "coupling exactness", ok, detail, {"runs": runs})


@_timed
def criterion_7(seed, workers):
    table_bad = 0
    for tail, head, label in itertools.product(S_STATES, S_STATES, LABELS):
        table_bad += int(GBT_TABLE[(tail, head, label)] != gbt_rule(tail, head, label))
    n_inputs = len(S_STATES) ** 2 * len(LABELS)
    runs = [x for x in _coupling_runs(seed, workers) if x["which"] == "gbt"]
    twos_bad = sum(not x["twos_dominate"] for x in runs)
    ok = table_bad == 0 and twos_bad == 0 and len(GBT_TABLE) == n_inputs
    detail = (f"table vs rule: {table_bad} differences on {n_inputs} inputs; "
              f"runs with a 2 of the GBT coordinate not a 2 of the allelopathic one: {twos_bad}/100")
    return CriterionResult(7, "GBT table and 2s dominance", ok, detail,
                           {"table_bad": table_bad, "twos_bad": twos_bad})


# duality

DUAL_PARAMS = ModelParams(4.0, 4.0, 0.0, d=1, L=20)


@_timed
def criterion_8(seed, workers):
    res = pmap(_duality_task, [(DUAL_PARAMS, 5.0, 0.3, seed, r) for r in range(1000)], workers)
    bad = sum(b for _, b in res)
    sites = sum(n for n, _ in res)
    return CriterionResult(8, "duality relation", bad == 0,
                           f"{bad} disagreeing sites out of {sites} (1000 realizations)",
                           {"per_realization": [b for _, b in res]})


@_timed
def criterion_9(seed, workers):
    res = pmap(_ancestor_task, [(DUAL_PARAMS, 5.0, 0.3, seed, r) for r in range(1000)], workers)
    det = sum(r[1] for r in res)
    match = sum(r[2] for r in res)
    vac = sum(r[3] for r in res)
    ext = sum(r[4] for r in res)
    ok = det == match and vac == 0 and det > 0
    detail = (f"{match}/{det} determined predictions correct; {vac} of {ext} extinct duals "
              f"sit on a forward-occupied site")
    return CriterionResult(9, "first ancestor", ok, detail, {"rows": [list(r) for r in res]})


# phase checks

@_timed
def criterion_10(seed, workers):
    base = ModelParams(4.0, 3.0, 0.0, d=2, L=100)
    common = dict(replicates=20, horizon=200.0, p1=0.5, p2=0.5, workers=workers)
    a = phase_sweep("beta1-gamma", base, [4.0], [0.0], seed=seed, **common)
    b = phase_sweep("beta1-gamma", base.replace(beta2=3.0), [3.0], [0.25, 1.0], seed=seed + 1, **common)
    c = phase_sweep("beta1-beta2", base.replace(gamma=2.0), [3.0], [3.0, 6.0, 12.0], seed=seed + 2,
                    **common)
    from .engine import Outcome
    fa = float(a.frequency(Outcome.SPECIES1_WINS)[0, 0])
    fb = b.frequency(Outcome.SPECIES1_WINS)[0]
    fc = c.frequency(Outcome.SPECIES2_WINS)[0]
    ok_a = fa >= 0.9
    ok_b = fb[1] >= fb[0]
    ok_c = bool(np.all(np.diff(fc) >= 0))
    detail = (f"(a) species-1 wins {fa:.2f}; (b) species-1 wins {fb[0]:.2f} at gamma=0.25, "
              f"{fb[1]:.2f} at gamma=1; (c) species-2 wins {', '.join(f'{v:.2f}' for v in fc)} "
              f"for beta2 = 3, 6, 12")
    payload = {k: s.outcomes.tolist() for k, s in (("a", a), ("b", b), ("c", c))}
    return CriterionResult(10, "directional phase checks", ok_a and ok_b and ok_c, detail, payload)


# percolation

def _nested_task(args):
    seed, r = args
    return (wet_nested(0.6, 0.8, 1, 200, seed, r, initial_wet="origin")
            and wet_nested(0.6, 0.8, 1, 200, seed, r, initial_wet="all"))


@_timed
def criterion_11(seed, workers):
    one = estimate_theta(1.0, 1, 200, 500, seed, workers)
    zero = estimate_theta(0.0, 1, 200, 500, seed, workers)
    lo = estimate_theta(0.6, 1, 200, 500, seed, workers)
    hi = estimate_theta(0.8, 1, 200, 500, seed, workers)
    nested = pmap(_nested_task, [(seed, r) for r in range(500)], workers)
    n_bad = sum(not v for v in nested)
    ok = one.theta_hat == 1.0 and zero.theta_hat == 0.0 and n_bad == 0 and hi.theta_hat > lo.theta_hat
    detail = (f"theta(1) = {one.theta_hat}, theta(0) = {zero.theta_hat}, theta(0.6) = "
              f"{lo.theta_hat:.3f} < theta(0.8) = {hi.theta_hat:.3f}; wet(0.6) not inside wet(0.8) "
              f"on {n_bad}/500 seeds")
    return CriterionResult(11, "percolation", ok, detail,
                           {"theta": [one.theta_hat, zero.theta_hat, lo.theta_hat, hi.theta_hat],
                            "nested": nested})


CRITERIA = {n: globals()[f"criterion_{n}"] for n in range(1, 12)}


def criterion_12(first: dict, workers: int, seed=None) -> CriterionResult:
    """Rerun every criterion in ``first`` with another worker count and compare digests."""
    t0 = time.perf_counter()
    other = 2 if workers == 1 else 1
    diffs = []
    for n, res in sorted(first.items()):
        again = CRITERIA[n](seed, other)
        if again.digest != res.digest:
            diffs.append(n)
    detail = (f"criteria {sorted(first)} rerun with {other} worker(s) vs {workers}: "
              + ("identical digests" if not diffs else f"digests differ for {diffs}"))
    return CriterionResult(12, "determinism", not diffs, detail,
                           {"digests": {n: r.digest for n, r in first.items()}},
                           time.perf_counter() - t0)


def run_all(only=None, workers: int = 1, out_dir=None, seed=None) -> list[CriterionResult]:
    numbers = sorted(only) if only else list(range(1, 13))
    results = {}
    for n in numbers:
        if n == 12:
            continue
        results[n] = CRITERIA[n](seed, workers)
    out = list(results.values())
    if 12 in numbers:
        out.append(criterion_12(results, workers, seed))
    if out_dir is not None:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        for r in out:
            (d / f"criterion_{r.number:02d}.json").write_bytes(canonical(r.payload) + b"\n")
        (d / "report.txt").write_text("\n".join(r.line() for r in out) + "\n")
    return out
