"""Torus geometry, site states, parameters and the local transition rates.

Sites of the torus (Z/L)^d are stored flat (C order) so the event kernels
can work on 1-D arrays; :meth:`SpatialConfig.coords` / :meth:`SpatialConfig.index`
convert between the two views.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np


class ConfigError(ValueError):
    """Parameters or inputs violate a precondition."""


class SiteState(IntEnum):
    EMPTY = 0
    INHIBITORY = 1
    SUSCEPTIBLE = 2


@dataclass(frozen=True)
class ModelParams:
    beta1: float
    beta2: float
    gamma: float
    M: float = 1.0
    d: int = 1
    L: int = 50

    def __post_init__(self):
        for name in ("beta1", "beta2", "gamma"):
            value = getattr(self, name)
            if not (value >= 0 and math.isfinite(value)):
                raise ConfigError(f"{name} must be finite and >= 0, got {value!r}")
        if int(self.d) != self.d or self.d < 1:
            raise ConfigError(f"d must be a positive integer, got {self.d!r}")
        if not self.M > 0:
            raise ConfigError(f"M must be > 0, got {self.M!r}")
        if int(self.L) != self.L or self.L <= 2 * math.ceil(self.M):
            raise ConfigError(
                f"L must be an integer > 2*ceil(M) = {2 * math.ceil(self.M)} "
                f"(otherwise neighborhoods wrap onto themselves), got L={self.L!r}"
            )

    @property
    def n_sites(self) -> int:
        return int(self.L) ** int(self.d)

    @property
    def shape(self) -> tuple[int, ...]:
        return (int(self.L),) * int(self.d)

    @property
    def total_rate_per_site(self) -> float:
        return 1.0 + self.beta1 + self.beta2 + self.gamma

    def replace(self, **changes) -> "ModelParams":
        values = dict(beta1=self.beta1, beta2=self.beta2, gamma=self.gamma,
                      M=self.M, d=self.d, L=self.L)
        values.update(changes)
        return ModelParams(**values)


@dataclass(frozen=True)
class NeighborhoodTemplate:
    offsets: np.ndarray  # (N, d) int
    L: int

    @property
    def N(self) -> int:
        return int(self.offsets.shape[0])

    @property
    def d(self) -> int:
        return int(self.offsets.shape[1])

    def table(self) -> np.ndarray:
        """Flat neighbor indices, shape (L^d, N): ``table[x, k]`` is x + offsets[k]."""
        shape = (self.L,) * self.d
        coords = np.indices(shape).reshape(self.d, -1)
        out = np.empty((coords.shape[1], self.N), dtype=np.int64)
        for k, off in enumerate(self.offsets):
            shifted = (coords + off[:, None]) % self.L
            out[:, k] = np.ravel_multi_index(tuple(shifted), shape)
        return out


def build_neighborhood(d: int, M: float, L: int) -> NeighborhoodTemplate:
    """All integer vectors y with 0 < ||y|| <= M (Euclidean, closed at M)."""
    if not M > 0:
        raise ConfigError(f"M must be > 0, got {M!r}")
    r = math.ceil(M)
    if L <= 2 * r:
        raise ConfigError(f"L={L} <= 2*ceil(M)={2 * r}: neighborhood would self-wrap")
    m2 = M * M
    offsets = [
        y for y in itertools.product(range(-r, r + 1), repeat=d)
        if 0 < sum(c * c for c in y) <= m2
    ]
    return NeighborhoodTemplate(np.array(offsets, dtype=np.int64).reshape(-1, d), int(L))


@dataclass
class SpatialConfig:
    """Lattice state. ``states`` is flat int8 of length L^d; counts[i] = #sites in state i."""

    L: int
    d: int
    states: np.ndarray
    counts: np.ndarray = field(default=None)

    def __post_init__(self):
        self.states = np.ascontiguousarray(self.states, dtype=np.int8).reshape(-1)
        if self.states.size != self.L ** self.d:
            raise ConfigError(f"expected {self.L ** self.d} sites, got {self.states.size}")
        if self.states.size and (self.states.min() < 0 or self.states.max() > 2):
            raise ConfigError("site states must be in {0, 1, 2}")
        if self.counts is None:
            self.counts = np.bincount(self.states, minlength=3).astype(np.int64)

    @classmethod
    def from_array(cls, grid) -> "SpatialConfig":
        grid = np.asarray(grid, dtype=np.int8)
        if len(set(grid.shape)) != 1:
            raise ConfigError("grid must be a hypercube")
        return cls(L=grid.shape[0], d=grid.ndim, states=grid.reshape(-1))

    @classmethod
    def empty(cls, L: int, d: int) -> "SpatialConfig":
        return cls(L=L, d=d, states=np.zeros(L ** d, dtype=np.int8))

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.L,) * self.d

    @property
    def n_sites(self) -> int:
        return self.states.size

    def grid(self) -> np.ndarray:
        return self.states.reshape(self.shape)

    def copy(self) -> "SpatialConfig":
        return SpatialConfig(self.L, self.d, self.states.copy(), self.counts.copy())

    def index(self, x) -> int:
        """Flat index of x; a plain integer is already a flat index."""
        if np.isscalar(x):
            return int(x) % self.n_sites
        return int(np.ravel_multi_index(tuple(int(c) % self.L for c in x), self.shape))

    def coords(self, i: int) -> tuple[int, ...]:
        return tuple(int(c) for c in np.unravel_index(int(i), self.shape))

    def __getitem__(self, x) -> int:
        return int(self.states[self.index(x)])

    def set(self, x, value: int) -> None:
        i = self.index(x)
        old = self.states[i]
        self.states[i] = value
        self.counts[old] -= 1
        self.counts[value] += 1

    def counts_consistent(self) -> bool:
        return bool(np.array_equal(self.counts, np.bincount(self.states, minlength=3)))

    def densities(self) -> np.ndarray:
        return self.counts / self.n_sites

    def shifted(self, v) -> "SpatialConfig":
        """Translate by torus vector v: new(x + v) = old(x)."""
        grid = np.roll(self.grid(), shift=tuple(int(c) for c in v), axis=tuple(range(self.d)))
        return SpatialConfig(self.L, self.d, grid.reshape(-1))

    def __eq__(self, other):
        if not isinstance(other, SpatialConfig):
            return NotImplemented
        return self.L == other.L and self.d == other.d and np.array_equal(self.states, other.states)


def local_fraction(config: SpatialConfig, x, i: int, tmpl: NeighborhoodTemplate) -> float:
    """Fraction of the N neighbors of x that are in state i."""
    base = np.array(config.coords(config.index(x)))
    nbrs = (base[None, :] + tmpl.offsets) % config.L
    idx = np.ravel_multi_index(tuple(nbrs.T), config.shape)
    return float(np.count_nonzero(config.states[idx] == i)) / tmpl.N


def site_rates(config: SpatialConfig, x, params: ModelParams,
               tmpl: NeighborhoodTemplate | None = None) -> dict[int, float]:
    """Outgoing transition rates of site x, keyed by the target state."""
    if tmpl is None:
        tmpl = build_neighborhood(params.d, params.M, params.L)
    state = config[x]
    if state == SiteState.EMPTY:
        return {
            1: params.beta1 * local_fraction(config, x, 1, tmpl),
            2: params.beta2 * local_fraction(config, x, 2, tmpl),
        }
    if state == SiteState.INHIBITORY:
        return {0: 1.0}
    return {0: 1.0 + params.gamma * local_fraction(config, x, 1, tmpl)}
