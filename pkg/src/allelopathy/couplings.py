"""Shared-log couplings and the grass-bush-tree comparison.

All three couplings verify their ordering at the head site of every event
(the only site an event can change), so a violation is caught at the exact
event that produced it.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .engine import (
    BIRTH1, BIRTH2, CROSS, KILL, GraphEvent, ObservableSeries, _check_initial, _sample_grid,
    iter_event_chunks, simulate_coupled,
)
from .lattice import ConfigError, ModelParams, SpatialConfig

# (allelopathic state, grass-bush-tree state); GBT states: 0 grass, 1 tree, 2 bush
S_STATES = ((0, 0), (0, 1), (1, 1), (2, 0), (2, 1), (2, 2))
LABELS = (0, 1, 2, "cross")

# Every entry where the head changes, transcribed label by label; anything
# missing leaves the head as it was. Crosses send every pair to (0, 0).
_CHANGES = {
    0: [((0, 1), (0, 0), (0, 1)), ((0, 1), (2, 0), (2, 1)), ((0, 1), (2, 2), (2, 1)),
        ((1, 1), (0, 0), (1, 1)), ((1, 1), (0, 1), (1, 1)), ((1, 1), (2, 0), (0, 1)),
        ((1, 1), (2, 1), (0, 1)), ((1, 1), (2, 2), (0, 1)), ((2, 1), (0, 0), (0, 1)),
        ((2, 1), (2, 0), (2, 1)), ((2, 1), (2, 2), (2, 1))],
    1: [((0, 1), (0, 0), (0, 1)), ((0, 1), (2, 0), (2, 1)), ((0, 1), (2, 2), (2, 1)),
        ((1, 1), (0, 0), (1, 1)), ((1, 1), (0, 1), (1, 1)), ((1, 1), (2, 0), (2, 1)),
        ((1, 1), (2, 2), (2, 1)), ((2, 1), (0, 0), (0, 1)), ((2, 1), (2, 0), (2, 1)),
        ((2, 1), (2, 2), (2, 1))],
    2: [((2, 0), (0, 0), (2, 0)), ((2, 0), (0, 1), (2, 1)), ((2, 1), (0, 0), (2, 0)),
        ((2, 1), (0, 1), (2, 1)), ((2, 2), (0, 0), (2, 2)), ((2, 2), (0, 1), (2, 1)),
        ((2, 2), (2, 0), (2, 2))],
}


def _table_from_data() -> dict:
    table = {}
    for tail, head, label in itertools.product(S_STATES, S_STATES, LABELS):
        table[tail, head, label] = (0, 0) if label == "cross" else head
    for label, rows in _CHANGES.items():
        for tail, head, after in rows:
            table[tail, head, label] = after
    return table


GBT_TABLE = _table_from_data()


def gbt_rule(tail: tuple, head: tuple, label) -> tuple:
    """Head pair after an event, derived from the update rules of both coordinates."""
    if label == "cross":
        return (0, 0)
    (ta, tg), (ha, hg) = tail, head
    if label in (0, 1):
        a = ha
        if ta == 1 and ha == 0:
            a = 1
        elif label == 0 and ta == 1 and ha == 2:
            a = 0
        g = 1 if (tg == 1 and hg in (0, 2)) else hg
    elif label == 2:
        a = 2 if (ta == 2 and ha == 0) else ha
        g = 2 if (tg == 2 and hg == 0) else hg
    else:
        raise ConfigError(f"unknown label {label!r}")
    return (a, g)


def gbt_transition(tail: tuple, head: tuple, label) -> tuple:
    tail, head = tuple(tail), tuple(head)
    if tail not in S_STATES or head not in S_STATES:
        raise ConfigError(f"pair states must lie in S, got tail={tail} head={head}")
    if label not in LABELS:
        raise ConfigError(f"label must be 0, 1, 2 or 'cross', got {label!r}")
    return GBT_TABLE[tail, head, label]


@dataclass
class CouplingReport:
    horizon: float
    violations: int
    first_violation: int | None  # index of the first offending event in the shared stream
    samples: list = field(default_factory=list)  # per-sample-time rows (dicts)
    departures: int = 0  # pair states outside S (GBT only)
    visited: set = field(default_factory=set)
    series: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.violations == 0 and self.departures == 0

    def to_csv(self, path) -> None:
        if not self.samples:
            return
        keys = list(self.samples[0])
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=keys)
            w.writeheader()
            for row in self.samples:
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def _order_stats(t, below, above):
    """Sitewise check of: below==1 => above==1 and above==2 => below==2."""
    bad = np.count_nonzero(((below == 1) & (above != 1)) | ((above == 2) & (below != 2)))
    return {"t": t, "ones_low": int(np.count_nonzero(below == 1)),
            "ones_high": int(np.count_nonzero(above == 1)),
            "twos_low": int(np.count_nonzero(below == 2)),
            "twos_high": int(np.count_nonzero(above == 2)),
            "order_violations": int(bad)}


def _run_monotone(initial, below_params, above_params, horizon, seed, sample_times):
    rows = []
    hook = lambda t, states: rows.append(_order_stats(t, states[0], states[1]))  # noqa: E731
    series, (n_viol, first) = simulate_coupled(
        [initial, initial.copy()], [below_params, above_params], horizon, seed,
        sample_times=sample_times, check_order=True, sample_hook=hook)
    n_viol += sum(r["order_violations"] for r in rows)
    return CouplingReport(horizon=horizon, violations=n_viol,
                          first_violation=None if first < 0 else first,
                          samples=rows, series=series)


def couple_gamma(initial: SpatialConfig, params: ModelParams, gamma_lo: float, gamma_hi: float,
                 horizon: float, seed, sample_times=None) -> CouplingReport:
    """Processes at gamma_lo and gamma_hi; the gamma_hi process sees extra kill arrows.

    Checked ordering: 1s(lo) subset of 1s(hi), 2s(hi) subset of 2s(lo).
    """
    if not 0 <= gamma_lo <= gamma_hi:
        raise ConfigError(f"need 0 <= gamma_lo <= gamma_hi, got {gamma_lo}, {gamma_hi}")
    _check_initial(initial, params)
    return _run_monotone(initial, params.replace(gamma=gamma_lo), params.replace(gamma=gamma_hi),
                         horizon, seed, sample_times)


def couple_birthrate(initial: SpatialConfig, params: ModelParams, beta2_lo: float, beta2_hi: float,
                     horizon: float, seed, sample_times=None) -> CouplingReport:
    """Processes at beta2_lo and beta2_hi; the beta2_hi process sees extra Birth2 arrows.

    Checked ordering: 2s(lo) subset of 2s(hi), 1s(hi) subset of 1s(lo). In the
    report the "low" columns belong to the beta2_hi process (the one with fewer 1s).
    """
    if not 0 <= beta2_lo <= beta2_hi:
        raise ConfigError(f"need 0 <= beta2_lo <= beta2_hi, got {beta2_lo}, {beta2_hi}")
    _check_initial(initial, params)
    return _run_monotone(initial, params.replace(beta2=beta2_hi), params.replace(beta2=beta2_lo),
                         horizon, seed, sample_times)


@njit(cache=True)
def _gbt_advance(xi, zeta, counts_a, counts_g, kinds, tails, heads, lo, hi, s_mask, stats, offset):
    # stats: [order violations, departures from S, first bad event]
    for e in range(lo, hi):
        kd = kinds[e]
        h = heads[e]
        tl = tails[e]
        a_old = xi[h]
        g_old = zeta[h]
        a_new = a_old
        g_new = g_old
        if kd == 3:
            a_new = 0
            g_new = 0
        elif kd == 2:
            if xi[tl] == 2 and a_old == 0:
                a_new = 2
            if zeta[tl] == 2 and g_old == 0:
                g_new = 2
        else:
            if xi[tl] == 1:
                if a_old == 0:
                    a_new = 1
                elif kd == 0 and a_old == 2:
                    a_new = 0
            if zeta[tl] == 1 and (g_old == 0 or g_old == 2):
                g_new = 1
        if a_new != a_old:
            xi[h] = a_new
            counts_a[a_old] -= 1
            counts_a[a_new] += 1
        if g_new != g_old:
            zeta[h] = g_new
            counts_g[g_old] -= 1
            counts_g[g_new] += 1
        bad = False
        if (a_new == 1 and g_new != 1) or (g_new == 2 and a_new != 2):
            stats[0] += 1
            bad = True
        if not s_mask[a_new, g_new]:
            stats[1] += 1
            bad = True
        if bad and stats[2] < 0:
            stats[2] = offset + e


def couple_gbt(initial: SpatialConfig, params: ModelParams, horizon: float, seed,
               sample_times=None, initial_gbt: SpatialConfig | None = None) -> CouplingReport:
    """Allelopathic model (xi) and grass-bush-tree system (zeta) on one representation.

    Label-0 arrows at gamma/N, label-1 at (beta1 - gamma)/N, label-2 at beta2/N,
    crosses at 1. Checks xi=1 => zeta=1, zeta=2 => xi=2 and closure in S.
    """
    if params.gamma > params.beta1:
        raise ConfigError(f"GBT coupling needs gamma <= beta1, got gamma={params.gamma} > beta1={params.beta1}")
    _check_initial(initial, params)
    zeta0 = initial if initial_gbt is None else initial_gbt
    s_mask = np.zeros((3, 3), dtype=np.bool_)
    for a, g in S_STATES:
        s_mask[a, g] = True
    if not np.all(s_mask[initial.states, zeta0.states]):
        raise ConfigError("initial pair configuration must lie in S sitewise")
    log_params = params.replace(beta1=params.beta1 - params.gamma)
    grid = _sample_grid(horizon, sample_times, ())
    xi, zeta = initial.states.copy(), zeta0.states.copy()
    ca, cg = initial.counts.copy(), zeta0.counts.copy()
    stats = np.array([0, 0, -1], dtype=np.int64)
    rows, samples_a, samples_g = [], [], []
    visited = set()

    def record(t):
        pairs = set(zip(xi.tolist(), zeta.tolist()))
        visited.update(pairs)
        row = _order_stats(t, xi, zeta)
        row["outside_S"] = int(np.count_nonzero(~s_mask[xi, zeta]))
        row["twos_dominate"] = bool(np.all(xi[zeta == 2] == 2))
        rows.append(row)
        samples_a.append(ca.copy())
        samples_g.append(cg.copy())

    nxt, seen = 0, 0
    for ch in iter_event_chunks(log_params, 0.0, horizon, seed):
        pos, n = 0, ch.times.size
        while pos < n:
            stop = int(np.searchsorted(ch.times, grid[nxt], "right")) if nxt < grid.size else n
            if stop > pos:
                _gbt_advance(xi, zeta, ca, cg, ch.kinds, ch.tails, ch.heads, pos, stop,
                             s_mask, stats, seen + pos)
                pos = stop
            if pos < n and nxt < grid.size:
                record(float(grid[nxt]))
                nxt += 1
        seen += n
    while nxt < grid.size:
        record(float(grid[nxt]))
        nxt += 1
    series = [
        ObservableSeries(grid.copy(), np.array(samples_a), xi.size, SpatialConfig(initial.L, initial.d, xi, ca),
                         np.full(2, np.inf), seen),
        ObservableSeries(grid.copy(), np.array(samples_g), xi.size, SpatialConfig(initial.L, initial.d, zeta, cg),
                         np.full(2, np.inf), seen),
    ]
    departures = int(stats[1]) + sum(r["outside_S"] for r in rows)
    violations = int(stats[0]) + sum(r["order_violations"] for r in rows)
    return CouplingReport(horizon=horizon, violations=violations,
                          first_violation=None if stats[2] < 0 else int(stats[2]),
                          samples=rows, departures=departures, visited=visited, series=series)


__all__ = [
    "S_STATES", "GBT_TABLE", "gbt_rule", "gbt_transition", "CouplingReport",
    "couple_gamma", "couple_birthrate", "couple_gbt", "KILL", "BIRTH1", "BIRTH2", "CROSS",
]
