import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from allelopathy.duality import (UNDETERMINED, check_duality, check_duality_all, dual_set,
                                 dual_tree, first_ancestor, forward_state, renewal_scan,
                                 type_via_first_ancestor)
from allelopathy.engine import BIRTH1, CROSS, KILL, generate_events, log_from_events, sample_initial
from allelopathy.harness import duality_realization
from allelopathy.lattice import ConfigError, ModelParams, SpatialConfig

P = ModelParams(4.0, 0.0, 0.0, L=20)


def test_dual_without_events():
    log = log_from_events(P, [], 5.0)
    assert dual_set(log, 3, 5.0, 0.0) == {3}
    assert dual_set(log, 3, 5.0, 5.0) == {3}
    path = first_ancestor(log, 3, 5.0)
    assert path.alive and path.jump_times == [] and path.position(4.9) == 3


def test_single_arrow_dual():
    # arrow 4 -> 3 at real time 2; dual from (3, 5) picks up 4 from dual time 3 on
    log = log_from_events(P, [(2.0, BIRTH1, 4, 3)], 5.0)
    assert dual_set(log, 3, 5.0, 2.9) == {3}
    assert dual_set(log, 3, 5.0, 3.0) == {3, 4}
    assert dual_set(log, 3, 5.0, 5.0) == {3, 4}


def test_first_ancestor_jumps_at_cross():
    # arrow 4 -> 3 at time 3, cross at 3 at time 1: sit at 3 until dual time 4, then 4
    log = log_from_events(P, [(3.0, BIRTH1, 4, 3), (1.0, CROSS, 3, 3)], 5.0)
    path = first_ancestor(log, 3, 5.0)
    assert path.jump_times == [4.0] and path.sites == [3, 4]
    assert path.position(3.9) == 3 and path.position(4.5) == 4


def test_first_ancestor_dies_with_the_dual():
    log = log_from_events(P, [(1.0, CROSS, 3, 3), (2.0, BIRTH1, 5, 7)], 5.0)
    path = first_ancestor(log, 3, 5.0)
    assert not path.alive and path.death_time == 4.0 and path.position(4.5) is None
    init = SpatialConfig.from_array([1] * 20)
    assert type_via_first_ancestor(init, log, 3, 5.0) == UNDETERMINED
    assert forward_state(init, log, 5.0).states[3] == 0


def test_earliest_arrow_wins():
    # after the cross, the arrow from 2 fires first and fills x; the later one from 4 is blocked
    log = log_from_events(P, [(1.0, CROSS, 3, 3), (2.0, BIRTH1, 2, 3), (3.0, BIRTH1, 4, 3)], 5.0)
    init = SpatialConfig.from_array([0, 0, 1, 0, 2] + [0] * 15)
    assert forward_state(init, log, 5.0).states[3] == 1
    assert type_via_first_ancestor(init, log, 3, 5.0) == 1
    assert first_ancestor(log, 3, 5.0).sites == [3, 2]


def test_kill_arrows_rejected():
    log = log_from_events(P, [(1.0, KILL, 2, 3)], 5.0)
    with pytest.raises(ConfigError):
        dual_set(log, 3, 5.0, 1.0)


def test_trivial_duality_cases():
    log = generate_events(P, 5.0, 3)
    assert not check_duality_all(SpatialConfig.empty(20, 1), log, 5.0).__contains__(False)
    no_cross = log_from_events(P, [(1.0, BIRTH1, 2, 3), (2.0, BIRTH1, 9, 8)], 5.0)
    full = SpatialConfig.from_array([1] * 20)
    assert all(check_duality(full, no_cross, x, 5.0) for x in range(20))


@given(st.integers(0, 100_000))
def test_duality_holds_pathwise(seed):
    init, log = duality_realization(P, 5.0, 0.3, seed)
    assert check_duality_all(init, log, 5.0).all()


@given(st.integers(0, 100_000), st.integers(0, 19), st.floats(0.0, 5.0))
def test_tree_members_equal_dual_set(seed, x, s):
    _, log = duality_realization(P, 5.0, 0.3, seed)
    tree = dual_tree(log, x, 5.0)
    assert tree.members(s) == dual_set(log, x, 5.0, s)
    assert tree.reaches_root()


@given(st.integers(0, 100_000), st.integers(0, 19))
def test_ancestor_inside_dual_and_predicts_type(seed, x):
    init, log = duality_realization(P, 5.0, 0.3, seed, symmetric_types=True)
    path = first_ancestor(log, x, 5.0)
    for s in np.linspace(0, 5.0, 26):
        pos = path.position(s)
        if pos is not None:
            assert pos in dual_set(log, x, 5.0, s)
    pred = type_via_first_ancestor(init, log, x, 5.0)
    fwd = forward_state(init, log, 5.0).states[x]
    if pred != UNDETERMINED:
        assert pred == fwd
    if not path.alive:
        assert fwd == 0


@given(st.integers(0, 100_000), st.integers(0, 19))
def test_full_occupancy_extinction_iff_vacancy(seed, x):
    _, log = duality_realization(P, 5.0, 0.3, seed)
    full = SpatialConfig.from_array([1] * 20)
    path = first_ancestor(log, x, 5.0)
    assert (not path.alive) == (forward_state(full, log, 5.0).states[x] == 0)
    if path.alive:
        assert type_via_first_ancestor(full, log, x, 5.0) == 1


def test_renewal_scan_flags():
    log = generate_events(P.replace(beta1=8.0), 10.0, 7, start=-10.0)
    path = max((first_ancestor(log, x, 0.0, depth=10.0) for x in range(20)),
               key=lambda a: len(a.jump_times))
    assert len(path.jump_times) > 2
    scan = renewal_scan(path, log, 0.0)
    assert all(c[3] is True for c in scan.candidates)
    scan = renewal_scan(path, log, 4.0)
    for s, r, site, flag in scan.candidates:
        if flag is False:
            assert not dual_set(log, site, r, 4.0)
        if flag is True:
            assert dual_set(log, site, r, 4.0)


def test_ancestor_path_csv(tmp_path):
    log = log_from_events(P, [(3.0, BIRTH1, 4, 3), (1.0, CROSS, 3, 3)], 5.0)
    path = first_ancestor(log, 3, 5.0)
    path.to_csv(tmp_path / "a.csv", P.shape)
    rows = (tmp_path / "a.csv").read_text().splitlines()
    assert rows[0] == "dual_time,x0,jump_flag,renewal_flag"
    assert rows[2].startswith("4.0,4,1")
