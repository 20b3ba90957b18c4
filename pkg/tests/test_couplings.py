import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from allelopathy.couplings import (GBT_TABLE, LABELS, S_STATES, couple_birthrate, couple_gamma,
                                   couple_gbt, gbt_rule, gbt_transition)
from allelopathy.engine import BIRTH1, BIRTH2, CROSS, KILL, GraphEvent, apply_event, sample_initial
from allelopathy.lattice import ConfigError, ModelParams, SpatialConfig


@pytest.mark.parametrize("tail,head,label,after", [
    ((1, 1), (2, 0), 0, (0, 1)),
    ((1, 1), (2, 0), 1, (2, 1)),
    ((2, 1), (0, 0), 2, (2, 0)),
    ((2, 2), (1, 1), "cross", (0, 0)),
])
def test_gbt_table_rows(tail, head, label, after):
    assert gbt_transition(tail, head, label) == after


def test_table_matches_rules_and_is_closed():
    assert len(GBT_TABLE) == 6 * 6 * 4
    for tail, head, label in itertools.product(S_STATES, S_STATES, LABELS):
        out = gbt_transition(tail, head, label)
        assert out == gbt_rule(tail, head, label)
        assert out in S_STATES


def test_gbt_first_coordinate_is_the_allelopathic_update():
    # label 0 kills a 2 at the head and otherwise acts as a birth1 arrow
    for tail, head, label in itertools.product(S_STATES, S_STATES, LABELS):
        cfg = SpatialConfig.from_array([tail[0], head[0], 0, 0, 0])
        k = {0: KILL if head[0] == 2 else BIRTH1, 1: BIRTH1, 2: BIRTH2, "cross": CROSS}[label]
        apply_event(cfg, GraphEvent(0.5, k, 0 if k != CROSS else 1, 1))
        assert gbt_transition(tail, head, label)[0] == cfg.states[1]


def test_gbt_second_coordinate_rules():
    # trees (1) spread onto grass or bush; bushes (2) only onto grass
    for tail, head, label in itertools.product(S_STATES, S_STATES, (0, 1, 2)):
        g = gbt_transition(tail, head, label)[1]
        if label in (0, 1):
            assert g == (1 if tail[1] == 1 and head[1] in (0, 2) else head[1])
        else:
            assert g == (2 if tail[1] == 2 and head[1] == 0 else head[1])


def test_gbt_rejects_states_outside_s():
    with pytest.raises(ConfigError):
        gbt_transition((1, 0), (0, 0), 0)
    with pytest.raises(ConfigError):
        gbt_transition((1, 1), (0, 0), 3)


def _init(seed, L=50):
    return sample_initial(L, 1, 0.4, 0.4, seed)


@given(st.integers(0, 10_000))
def test_gamma_coupling_never_violates(seed):
    p = ModelParams(2.0, 3.0, 0.5, L=50)
    rep = couple_gamma(_init(seed), p, 0.5, 2.0, 10.0, seed, sample_times=np.arange(0, 10.5, 1.0))
    assert rep.ok and rep.first_violation is None


@given(st.integers(0, 10_000))
def test_birthrate_coupling_never_violates(seed):
    p = ModelParams(2.0, 2.0, 1.0, L=50)
    rep = couple_birthrate(_init(seed), p, 2.0, 3.0, 10.0, seed, sample_times=[2, 4, 6])
    assert rep.ok


def test_equal_rates_give_identical_processes():
    p = ModelParams(2.0, 3.0, 1.0, L=40)
    rep = couple_gamma(_init(1, 40), p, 1.0, 1.0, 10.0, 1)
    a, b = rep.series
    assert a.final == b.final and np.array_equal(a.counts, b.counts)
    rep = couple_birthrate(_init(2, 40), p, 3.0, 3.0, 10.0, 2)
    assert rep.series[0].final == rep.series[1].final


def test_large_gamma_has_fewer_twos():
    p = ModelParams(2.0, 3.0, 0.5, L=50)
    rep = couple_gamma(_init(3), p, 0.5, 1e4, 10.0, 3, sample_times=np.arange(0, 10.5, 0.5))
    assert rep.ok
    assert all(r["twos_high"] <= r["twos_low"] for r in rep.samples)


@given(st.integers(0, 10_000))
def test_gbt_coupling_closed_and_ordered(seed):
    p = ModelParams(2.0, 3.0, 1.0, L=50)
    rep = couple_gbt(_init(seed), p, 10.0, seed, sample_times=np.arange(0, 10.5, 1.0))
    assert rep.ok and rep.departures == 0
    assert rep.visited <= set(S_STATES)
    assert all(r["twos_dominate"] and r["outside_S"] == 0 for r in rep.samples)


def test_gbt_empty_start_stays_empty():
    p = ModelParams(2.0, 3.0, 1.0, L=20)
    rep = couple_gbt(SpatialConfig.empty(20, 1), p, 5.0, 1)
    assert all(s.final.counts[0] == 20 for s in rep.series)


def test_gbt_needs_gamma_at_most_beta1():
    with pytest.raises(ConfigError):
        couple_gbt(_init(0, 20), ModelParams(1.0, 3.0, 2.0, L=20), 1.0, 0)


def test_coupling_csv(tmp_path):
    p = ModelParams(2.0, 3.0, 1.0, L=30)
    rep = couple_gbt(_init(4, 30), p, 5.0, 4, sample_times=[1, 2])
    rep.to_csv(tmp_path / "c.csv")
    header = (tmp_path / "c.csv").read_text().splitlines()[0].split(",")
    assert header[:6] == ["t", "ones_low", "ones_high", "twos_low", "twos_high", "order_violations"]
