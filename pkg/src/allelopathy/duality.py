"""Dual process, duality check and the distinguished particle (first ancestor).

Only logs without kill arrows are accepted. Birth arrows of either label are
read as unlabeled, i.e. the contact process / symmetric multitype contact
process construction; forward runs that are compared with the dual must use
``symmetric=True`` so that both types use every arrow.

Walking down from (x, t), the dual is processed over events with times in
[t - s, t]; an arrow y -> z met on a lineage at z adds a lineage at y, a
cross at z removes the lineage at z.

Ancestor order. Each lineage carries a key, the tuple of real times at which
it left a segment through an arrow. On a single segment, the arrow that fires
first in real time (the one closest above the segment's bottom) is the one
that fills the site forward in time, and staying on the segment down to its
bottom beats any arrow. Keys are therefore compared as tuples: a prefix wins,
otherwise the smaller branch time wins. Two lineages that meet at a site
share their whole future, so only the smaller key is kept. The first
ancestor is the lineage with the smallest key; it only changes when a cross
removes it, at which point it moves to the smallest remaining key.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .engine import CROSS, KILL, EventLog, replay
from .lattice import ConfigError, SpatialConfig

UNDETERMINED = "undetermined"


def _require_no_kills(log: EventLog) -> None:
    if np.any(log.kinds == KILL):
        raise ConfigError("dual process needs a log without kill arrows (gamma = 0)")


def _window_desc(log: EventLog, lo: float, hi: float):
    """Events with lo <= time <= hi, newest first, as python lists."""
    a = int(np.searchsorted(log.times, lo, "left"))
    b = int(np.searchsorted(log.times, hi, "right"))
    return (log.times[a:b][::-1].tolist(), log.kinds[a:b][::-1].tolist(),
            log.tails[a:b][::-1].tolist(), log.heads[a:b][::-1].tolist())


def _check_window(log: EventLog, t: float, s: float) -> None:
    if not (0 <= s and log.start <= t - s and t <= log.end + 1e-12):
        raise ConfigError(
            f"need 0 <= s and {log.start} <= t - s <= t <= {log.end}, got t={t}, s={s}")


def dual_set(log: EventLog, x: int, t: float, s: float) -> set[int]:
    """Sites y with a dual path from (x, t) down to (y, t - s). Sites are flat indices."""
    _require_no_kills(log)
    _check_window(log, t, s)
    alive = {int(x)}
    times, kinds, tails, heads = _window_desc(log, t - s, t)
    for kd, tl, hd in zip(kinds, tails, heads):
        if hd not in alive:
            continue
        if kd == CROSS:
            alive.discard(hd)
            if not alive:
                break
        else:
            alive.add(tl)
    return alive


def dual_alive_at(log: EventLog, x: int, t: float, s: float) -> bool:
    return bool(dual_set(log, x, t, s))


@dataclass
class Segment:
    site: int
    top: float          # real time at which the lineage enters this site
    bottom: float       # real time at which it ends (cross, merge or the lower limit)
    parent: int         # index of the segment it branched from, -1 for the root
    key: tuple
    end: str = "open"   # "cross", "merged" or "open"


@dataclass
class DualTree:
    root: tuple
    lower: float
    segments: list = field(default_factory=list)

    def members(self, s: float) -> set[int]:
        """Dual set at dual time s, read off the segments."""
        x, t = self.root
        r = t - s
        return {seg.site for seg in self.segments
                if r <= seg.top and (r > seg.bottom or (seg.end == "open" and r >= seg.bottom))}

    def reaches_root(self) -> bool:
        for i, seg in enumerate(self.segments):
            seen = set()
            j = i
            while self.segments[j].parent != -1:
                if j in seen:
                    return False
                seen.add(j)
                j = self.segments[j].parent
            if j != 0:
                return False
        return True


def dual_tree(log: EventLog, x: int, t: float, depth: float | None = None) -> DualTree:
    """Segments of the dual started at (x, t), followed down to t - depth."""
    _require_no_kills(log)
    depth = t - log.start if depth is None else depth
    _check_window(log, t, depth)
    lower = t - depth
    tree = DualTree(root=(int(x), t), lower=lower)
    tree.segments.append(Segment(int(x), t, lower, -1, ()))
    live = {int(x): 0}  # site -> segment index
    times, kinds, tails, heads = _window_desc(log, lower, t)
    for u, kd, tl, hd in zip(times, kinds, tails, heads):
        j = live.get(hd)
        if j is None:
            continue
        if kd == CROSS:
            seg = tree.segments[j]
            seg.bottom, seg.end = u, "cross"
            del live[hd]
            continue
        key = tree.segments[j].key + (u,)
        other = live.get(tl)
        if other is not None:
            if tree.segments[other].key <= key:
                continue
            old = tree.segments[other]
            old.bottom, old.end = u, "merged"
        tree.segments.append(Segment(tl, u, lower, j, key))
        live[tl] = len(tree.segments) - 1
    return tree


@dataclass
class AncestorPath:
    """Distinguished-particle trajectory from (x, t); dual time s = t - real time."""

    root: tuple
    depth: float
    jump_times: list = field(default_factory=list)   # dual times of jumps
    sites: list = field(default_factory=list)        # sites[i] held on [jump_times[i-1], jump_times[i])
    alive: bool = True
    death_time: float = math.inf                     # dual time at which the dual died
    renewal: list = field(default_factory=list)      # per jump: True / False / None (not scanned)

    def position(self, s: float) -> int | None:
        if not 0 <= s <= self.depth or (not self.alive and s >= self.death_time):
            return None
        i = int(np.searchsorted(self.jump_times, s, "right"))
        return self.sites[i]

    @property
    def final_site(self) -> int | None:
        return self.sites[-1] if self.alive else None

    def to_csv(self, path, shape: tuple) -> None:
        d = len(shape)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["dual_time", *[f"x{i}" for i in range(d)], "jump_flag", "renewal_flag"])
            w.writerow([repr(0.0), *np.unravel_index(self.sites[0], shape), 0, ""])
            for i, s in enumerate(self.jump_times):
                flag = self.renewal[i] if i < len(self.renewal) else None
                coords = np.unravel_index(self.sites[i + 1], shape) if i + 1 < len(self.sites) else [""] * d
                w.writerow([repr(float(s)), *coords, 1, "" if flag is None else int(flag)])
            if not self.alive:
                w.writerow([repr(float(self.death_time)), *[""] * d, 0, ""])


def first_ancestor(log: EventLog, x: int, t: float, depth: float | None = None) -> AncestorPath:
    """Follow the first ancestor of (x, t) down to dual time ``depth`` (default: to log.start)."""
    _require_no_kills(log)
    depth = t - log.start if depth is None else depth
    _check_window(log, t, depth)
    keys = {int(x): ()}
    first = int(x)
    path = AncestorPath(root=(int(x), t), depth=depth, sites=[first])
    times, kinds, tails, heads = _window_desc(log, t - depth, t)
    for u, kd, tl, hd in zip(times, kinds, tails, heads):
        key = keys.get(hd)
        if key is None:
            continue
        if kd == CROSS:
            del keys[hd]
            if hd == first:
                if not keys:
                    path.alive = False
                    path.death_time = t - u
                    break
                first = min(keys, key=keys.__getitem__)
                path.jump_times.append(t - u)
                path.sites.append(first)
            continue
        new = key + (u,)
        old = keys.get(tl)
        if old is None or new < old:
            keys[tl] = new
    return path


def forward_state(initial: SpatialConfig, log: EventLog, t: float) -> SpatialConfig:
    """Configuration at time t of the symmetric (unlabeled-arrow) process driven by ``log``."""
    return replay(initial, log, until=t, symmetric=True).final


def check_duality(initial: SpatialConfig, log: EventLog, x: int, t: float,
                  forward: SpatialConfig | None = None) -> bool:
    """True iff forward occupancy of (x, t) equals 'dual set meets the initial occupied set'."""
    _require_no_kills(log)
    if forward is None:
        forward = forward_state(initial, log, t)
    occupied = forward.states[int(x)] != 0
    dual = dual_set(log, x, t, t - log.start)
    hits = any(initial.states[y] != 0 for y in dual)
    return bool(occupied) == hits


def check_duality_all(initial: SpatialConfig, log: EventLog, t: float) -> np.ndarray:
    """Per-site agreement array for the duality relation at time t."""
    forward = forward_state(initial, log, t)
    return np.array([check_duality(initial, log, x, t, forward) for x in range(initial.n_sites)])


def type_via_first_ancestor(initial: SpatialConfig, log: EventLog, x: int, t: float):
    """Type of (x, t) read from the first ancestor, or "undetermined".

    Determined only when the first ancestor survives to time 0 and lands on
    an initially occupied site.
    """
    path = first_ancestor(log, x, t, t - log.start)
    if not path.alive:
        return UNDETERMINED
    state = int(initial.states[path.final_site])
    return state if state != 0 else UNDETERMINED


def torus_displacement(a: int, b: int, shape: tuple) -> np.ndarray:
    L = np.array(shape)
    diff = (np.array(np.unravel_index(b, shape)) - np.array(np.unravel_index(a, shape))) % L
    return np.where(diff > L // 2, diff - L, diff)


@dataclass
class RenewalScan:
    lookahead: float
    candidates: list          # (dual_time, real_time, site, flag) with flag True/False/None
    displacements: list       # (spatial displacement vector, dual-time gap) between flagged points

    @property
    def flagged(self) -> list:
        return [c for c in self.candidates if c[3] is True]

    @property
    def insufficient(self) -> list:
        return [c for c in self.candidates if c[3] is None]


def renewal_scan(path: AncestorPath, log: EventLog, lookahead: float) -> RenewalScan:
    """Flag jump points whose dual survives ``lookahead`` (approximate renewal points).

    A candidate whose window would reach below the log start gets flag None.
    """
    x, t = path.root
    shape = log.params.shape
    candidates = []
    for i, s in enumerate(path.jump_times):
        site = path.sites[i + 1]
        r = t - s
        if r - lookahead < log.start - 1e-12:
            flag = None
        else:
            flag = dual_alive_at(log, site, r, lookahead)
        candidates.append((s, r, site, flag))
    path.renewal = [c[3] for c in candidates]
    displacements = []
    prev = None
    for c in candidates:
        if c[3] is True:
            if prev is not None:
                displacements.append((torus_displacement(prev[2], c[2], shape), c[0] - prev[0]))
            prev = c
    return RenewalScan(lookahead, candidates, displacements)


def displacement_tail_fit(displacements) -> dict:
    """Least-squares slope of log P(|dx| >= r) against r; reported, never asserted."""
    if len(displacements) < 3:
        return {"n": len(displacements), "rate": math.nan}
    norms = np.sort(np.array([np.linalg.norm(dx) for dx, _ in displacements]))
    radii = np.unique(norms)
    surv = np.array([np.mean(norms >= r) for r in radii])
    keep = surv > 0
    if keep.sum() < 2:
        return {"n": len(norms), "rate": math.nan}
    slope, intercept = np.polyfit(radii[keep], np.log(surv[keep]), 1)
    return {"n": len(norms), "rate": float(-slope), "intercept": float(intercept)}
