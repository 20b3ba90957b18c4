import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from allelopathy.lattice import (ConfigError, ModelParams, SpatialConfig, build_neighborhood,
                                 local_fraction, site_rates)


def brute_force_count(d, M):
    r = int(math.floor(M))
    return sum(1 for y in itertools.product(range(-r, r + 1), repeat=d)
               if 0 < sum(c * c for c in y) <= M * M)


@pytest.mark.parametrize("d,M,N", [(1, 1, 2), (2, 1, 4), (2, 1.5, 8), (3, 1, 6), (2, 2, 12)])
def test_neighborhood_sizes(d, M, N):
    tmpl = build_neighborhood(d, M, 9)
    assert tmpl.N == N == brute_force_count(d, M)


def test_neighborhood_1d_offsets():
    assert sorted(build_neighborhood(1, 1, 5).offsets.ravel().tolist()) == [-1, 1]


@given(st.integers(1, 3), st.floats(0.5, 2.6))
def test_neighborhood_symmetric_and_excludes_origin(d, M):
    tmpl = build_neighborhood(d, M, 2 * math.ceil(M) + 1)
    offs = {tuple(o) for o in tmpl.offsets.tolist()}
    assert (0,) * d not in offs
    assert offs == {tuple(-c for c in o) for o in offs}
    positive = [o for o in offs if next(c for c in o if c != 0) > 0]
    assert tmpl.N == 2 * len(positive)


def test_neighbor_table_uniform_size():
    tab = build_neighborhood(2, 1.5, 7).table()
    assert tab.shape == (49, 8)
    assert all(len(set(row)) == 8 for row in tab.tolist())


@pytest.mark.parametrize("kw", [dict(beta1=-1, beta2=1, gamma=0), dict(beta1=1, beta2=1, gamma=math.inf),
                                dict(beta1=1, beta2=1, gamma=0, L=2),
                                dict(beta1=1, beta2=1, gamma=0, M=2, L=4),
                                dict(beta1=1, beta2=1, gamma=0, d=0)])
def test_params_rejected(kw):
    with pytest.raises(ConfigError):
        ModelParams(**kw)


def test_local_fraction_examples():
    tmpl = build_neighborhood(1, 1, 5)
    cfg = SpatialConfig.from_array([1, 0, 2, 0, 0])
    # neighbours of site 1 are sites 0 (state 1) and 2 (state 2)
    assert local_fraction(cfg, 1, 1, tmpl) == 0.5
    assert local_fraction(cfg, 1, 2, tmpl) == 0.5
    full = SpatialConfig.from_array([1] * 5)
    assert local_fraction(full, 3, 1, tmpl) == 1.0
    empty = SpatialConfig.empty(5, 1)
    assert local_fraction(empty, 0, 1, tmpl) == local_fraction(empty, 0, 2, tmpl) == 0.0


def test_site_rates_examples():
    p = ModelParams(2.0, 3.0, 4.0, L=5)
    cfg = SpatialConfig.from_array([1, 2, 0, 0, 0])
    assert site_rates(cfg, 0, p) == {0: 1.0}
    # site 1 is a 2 with one of two neighbours a 1: 1 + 4 * 0.5
    assert site_rates(cfg, 1, p) == {0: 3.0}
    assert site_rates(cfg, 3, p) == {1: 0.0, 2: 0.0}
    assert site_rates(cfg, 2, p) == {1: 0.0, 2: 1.5}


grids = st.integers(5, 7).flatmap(
    lambda L: st.lists(st.integers(0, 2), min_size=L * L, max_size=L * L).map(
        lambda v: SpatialConfig(L, 2, np.array(v))))


@given(grids, st.data())
def test_fractions_sum_to_one(cfg, data):
    tmpl = build_neighborhood(2, 1.5, cfg.L)
    x = data.draw(st.integers(0, cfg.n_sites - 1))
    assert sum(local_fraction(cfg, x, i, tmpl) for i in range(3)) == pytest.approx(1.0)


@given(grids, st.data())
def test_rates_translation_invariant(cfg, data):
    p = ModelParams(1.3, 2.1, 0.7, M=1.5, d=2, L=cfg.L)
    x = data.draw(st.tuples(st.integers(0, cfg.L - 1), st.integers(0, cfg.L - 1)))
    v = data.draw(st.tuples(st.integers(-cfg.L, cfg.L), st.integers(-cfg.L, cfg.L)))
    moved = cfg.shifted(v)
    y = tuple(a + b for a, b in zip(x, v))
    assert site_rates(cfg, x, p) == site_rates(moved, y, p)


@given(grids, st.data())
def test_gamma_zero_is_multitype_contact(cfg, data):
    p = ModelParams(1.3, 2.1, 0.0, d=2, L=cfg.L)
    tmpl = build_neighborhood(2, 1, cfg.L)
    x = data.draw(st.integers(0, cfg.n_sites - 1))
    rates = site_rates(cfg, x, p, tmpl)
    s = cfg.states[x]
    if s == 0:
        assert rates == {1: 1.3 * local_fraction(cfg, x, 1, tmpl), 2: 2.1 * local_fraction(cfg, x, 2, tmpl)}
    else:
        assert rates == {0: 1.0}


def test_config_counts_and_set():
    cfg = SpatialConfig.empty(4, 2)
    cfg.set((1, 2), 2)
    cfg.set((5, 2), 1)  # wraps to (1, 2)
    assert cfg[(1, 2)] == 1
    assert cfg.counts.tolist() == [15, 1, 0]
    assert cfg.counts_consistent()
    with pytest.raises(ConfigError):
        SpatialConfig(3, 1, np.array([0, 3, 1]))
