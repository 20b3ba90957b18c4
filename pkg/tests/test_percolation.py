import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from allelopathy.lattice import ConfigError
from allelopathy.percolation import (closed_reach, estimate_theta, parity_mask, percolate,
                                     wet_nested, write_theta_csv)


def brute_wet(sample):
    """Dictionary search over (m, n) with explicit parity and box checks."""
    w, d = sample.half_width, sample.d
    is_open = lambda m, n: (  # noqa: E731
        all(abs(c) <= w for c in m) and (sum(m) + n) % 2 == 0
        and bool(sample.open[(n,) + tuple(c + w for c in m)]))
    wet = {(0,) * d} if is_open((0,) * d, 0) else set()
    levels = [wet]
    for n in range(1, sample.n_max + 1):
        nxt = set()
        for m in levels[-1]:
            for ax, s in itertools.product(range(d), (-1, 1)):
                y = list(m)
                y[ax] += s
                if is_open(tuple(y), n):
                    nxt.add(tuple(y))
        levels.append(nxt)
    return levels


@given(st.integers(1, 2), st.floats(0.3, 1.0), st.integers(0, 10_000))
@settings(max_examples=30)
def test_wet_sets_match_brute_force(d, p, seed):
    s = percolate(p, d=d, n_max=8, seed=seed)
    levels = brute_wet(s)
    for n in range(s.n_max + 1):
        got = {tuple(int(c) for c in m) for m in s.wet_sites(n)}
        assert got == levels[n]


def test_parity_and_cone():
    s = percolate(1.0, d=1, n_max=6)
    for n in range(7):
        sites = s.wet_sites(n)[:, 0]
        assert sorted(sites.tolist()) == list(range(-n, n + 1, 2))
    assert parity_mask(2, 2, 0).sum() == 13


def test_extreme_p():
    assert percolate(0.0, n_max=5).reached() == -1
    assert percolate(1.0, d=2, n_max=5).reached() == 5


@given(st.floats(0, 1), st.floats(0, 1), st.integers(0, 1000))
@settings(max_examples=30)
def test_monotone_in_p(a, b, seed):
    lo, hi = sorted((a, b))
    assert wet_nested(lo, hi, 1, 20, seed)
    assert wet_nested(lo, hi, 2, 8, seed, initial_wet="origin")


def test_initial_sets():
    s = percolate(1.0, n_max=3, initial_wet=[(-2,), (2,)])
    assert s.wet_sites(0)[:, 0].tolist() == [-2, 2]
    with pytest.raises(ConfigError):
        percolate(0.5, n_max=3, initial_wet=[(1,)])
    with pytest.raises(ConfigError):
        percolate(1.5)


def test_closed_reach_reported():
    assert closed_reach(percolate(0.0, n_max=4)) == 4
    assert closed_reach(percolate(1.0, n_max=4)) == -1


def test_theta_estimates(tmp_path):
    low = estimate_theta(0.3, n_max=40, reps=40, seed=1)
    high = estimate_theta(0.95, n_max=40, reps=40, seed=1)
    assert low.theta_hat <= high.theta_hat
    assert high.ci_lo <= high.theta_hat <= high.ci_hi
    write_theta_csv(tmp_path / "t.csv", [low, high])
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "p,reps,n_max,theta_hat,ci_lo,ci_hi"
