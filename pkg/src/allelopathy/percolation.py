"""Oriented site percolation on {(m, n) : m1 + ... + md + n even}.

Level n is stored as a box of side 2w + 1 centred on the origin (w = half
width); sites of the wrong parity and sites outside the box are closed. A
site is open iff its uniform is below p, so samples for different p drawn
from the same seed are coupled monotonically.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.stats import binomtest

from .engine import generator, seed_sequence
from .lattice import ConfigError


@dataclass
class PercSample:
    p: float
    d: int
    n_max: int
    half_width: int
    open: np.ndarray    # bool, shape (n_max + 1,) + (2w + 1,) * d
    wet: np.ndarray     # same shape

    @property
    def origin_index(self) -> tuple:
        return (self.half_width,) * self.d

    def wet_counts(self) -> np.ndarray:
        return self.wet.reshape(self.n_max + 1, -1).sum(axis=1)

    def reached(self) -> int:
        """Highest level holding a wet site, -1 if none."""
        nz = np.flatnonzero(self.wet_counts())
        return int(nz[-1]) if nz.size else -1

    def wet_sites(self, level: int) -> np.ndarray:
        """Coordinates m of the wet sites at a level, origin-centred."""
        return np.argwhere(self.wet[level]) - self.half_width


def parity_mask(d: int, half_width: int, level: int) -> np.ndarray:
    axes = np.indices((2 * half_width + 1,) * d) - half_width
    return (axes.sum(axis=0) + level) % 2 == 0


def _spread(prev: np.ndarray) -> np.ndarray:
    """Sites with at least one neighbour (l1 distance 1) in ``prev``; nothing enters from outside."""
    out = np.zeros_like(prev)
    for ax in range(prev.ndim):
        lo = [slice(None)] * prev.ndim
        hi = [slice(None)] * prev.ndim
        lo[ax], hi[ax] = slice(0, -1), slice(1, None)
        out[tuple(hi)] |= prev[tuple(lo)]
        out[tuple(lo)] |= prev[tuple(hi)]
    return out


def wet_from(open_flags: np.ndarray, start: np.ndarray) -> np.ndarray:
    """Level-by-level wet sets from the level-0 seed set ``start``."""
    wet = np.zeros_like(open_flags)
    wet[0] = open_flags[0] & start
    for n in range(1, open_flags.shape[0]):
        if not wet[n - 1].any():
            break
        wet[n] = open_flags[n] & _spread(wet[n - 1])
    return wet


def _initial(wet0, d: int, half_width: int) -> np.ndarray:
    shape = (2 * half_width + 1,) * d
    even = parity_mask(d, half_width, 0)
    if isinstance(wet0, str):
        if wet0 == "origin":
            start = np.zeros(shape, dtype=bool)
            start[(half_width,) * d] = True
            return start
        if wet0 == "all":
            return even
        raise ConfigError(f"initial wet set must be 'origin', 'all' or a list of sites, got {wet0!r}")
    start = np.zeros(shape, dtype=bool)
    for m in wet0:
        m = tuple(int(v) for v in np.atleast_1d(m))
        if len(m) != d or max(abs(v) for v in m) > half_width:
            raise ConfigError(f"initial site {m} is not inside the level-0 box")
        if sum(m) % 2:
            raise ConfigError(f"initial site {m} has odd parity at level 0")
        start[tuple(v + half_width for v in m)] = True
    return start


def uniforms(d: int, n_max: int, half_width: int, seed: int, replicate: int = 0) -> np.ndarray:
    rng = generator(seed_sequence(seed, 0, replicate))
    return rng.random((n_max + 1,) + (2 * half_width + 1,) * d)


def percolate(p: float, d: int = 1, n_max: int = 100, width: int | None = None,
              seed: int = 0, initial_wet="origin", replicate: int = 0) -> PercSample:
    """One sample. ``width`` is the half width; it defaults to n_max + 1 so the box edge is never reached."""
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"p must lie in [0, 1], got {p}")
    if d < 1 or n_max < 0:
        raise ConfigError("need d >= 1 and n_max >= 0")
    w = n_max + 1 if width is None else int(width)
    if w < 0:
        raise ConfigError("width must be nonnegative")
    u = uniforms(d, n_max, w, seed, replicate)
    open_flags = u < p
    open_flags[0::2] &= parity_mask(d, w, 0)
    open_flags[1::2] &= parity_mask(d, w, 1)
    wet = wet_from(open_flags, _initial(initial_wet, d, w))
    return PercSample(p, d, n_max, w, open_flags, wet)


def closed_reach(sample: PercSample) -> int:
    """Highest level reached by an oriented path of closed sites from level 0 (reported only)."""
    closed = ~sample.open
    closed[0::2] &= parity_mask(sample.d, sample.half_width, 0)
    closed[1::2] &= parity_mask(sample.d, sample.half_width, 1)
    reach = wet_from(closed, parity_mask(sample.d, sample.half_width, 0))
    nz = np.flatnonzero(reach.reshape(sample.n_max + 1, -1).any(axis=1))
    return int(nz[-1]) if nz.size else -1


def _survives(args) -> bool:
    p, d, n_max, seed, r = args
    return percolate(p, d, n_max, seed=seed, replicate=r).reached() == n_max


@dataclass
class ThetaEstimate:
    p: float
    reps: int
    n_max: int
    successes: int
    theta_hat: float
    ci_lo: float
    ci_hi: float

    def row(self) -> list:
        return [repr(self.p), self.reps, self.n_max, repr(self.theta_hat),
                repr(self.ci_lo), repr(self.ci_hi)]


THETA_HEADER = ["p", "reps", "n_max", "theta_hat", "ci_lo", "ci_hi"]


def estimate_theta(p: float, d: int = 1, n_max: int = 100, reps: int = 100,
                   seed: int = 0, workers: int = 1, confidence: float = 0.95) -> ThetaEstimate:
    """Fraction of replicates whose origin cluster reaches level n_max, with a Wilson interval.

    Replicate r always uses stream (seed, 0, r), so estimates at different p
    share their uniforms.
    """
    if reps < 1:
        raise ConfigError("reps must be >= 1")
    from .parallel import pmap
    hits = pmap(_survives, [(p, d, n_max, seed, r) for r in range(reps)], workers)
    k = int(sum(hits))
    ci = binomtest(k, reps).proportion_ci(confidence, method="wilson")
    return ThetaEstimate(p, reps, n_max, k, k / reps, float(ci.low), float(ci.high))


def write_theta_csv(path, estimates) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(THETA_HEADER)
        for e in estimates:
            w.writerow(e.row())


def wet_nested(p_lo: float, p_hi: float, d: int, n_max: int, seed: int,
               replicate: int = 0, initial_wet="all") -> bool:
    """Sitewise wet(p_lo) <= wet(p_hi) on shared uniforms."""
    lo = percolate(p_lo, d, n_max, seed=seed, initial_wet=initial_wet, replicate=replicate)
    hi = percolate(p_hi, d, n_max, seed=seed, initial_wet=initial_wet, replicate=replicate)
    return bool(np.all(~lo.wet | hi.wet))

