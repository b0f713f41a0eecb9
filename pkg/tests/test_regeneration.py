import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rwre_lil.environment import EnvironmentView, preset
from rwre_lil.errors import Censored, IndexOutOfRange, InsufficientRegenerations, Undetermined
from rwre_lil.regeneration import (
    CensorPolicy,
    LadderState,
    RegenerationSequence,
    RegenSamples,
    block_samples,
    count_kn,
    detect_regenerations,
    extract_samples,
    first_regeneration_oracle,
    regenerations_by_oracle,
    stopping_time_D,
    stopping_time_T,
    z_increment,
)
from rwre_lil.walk import Trajectory, WalkSeed, projection, simulate

INF = float("inf")


# ------------------------------------------------------------ stopping times
def test_D_examples():
    assert stopping_time_D([0, 1, 0, 2], 1) == 1
    assert stopping_time_D(np.arange(10), 0) is None
    assert stopping_time_D([2, 2, 1], 0) == 2


def test_D_bad_start():
    with pytest.raises(IndexOutOfRange):
        stopping_time_D([0, 1], 2)


def test_T_examples():
    assert stopping_time_T([0, 1, 2], 1) == 1
    assert stopping_time_T([0, 1, 2], 0) == 0
    assert stopping_time_T([0, -1, -2], 1) is None


def test_T_beyond_head_window():
    proj = np.concatenate((np.zeros(100), [1.0]))
    assert stopping_time_T(proj, 1) == 100
    assert stopping_time_D(np.concatenate((np.zeros(100), [-1.0])), 0) == 100


# ------------------------------------------------------------- hand traces
def test_oracle_hand_trace():
    tau, state = first_regeneration_oracle([0, 1, 0, 1, 2, 3, 4, 5], CensorPolicy(3))
    assert tau == 4
    assert state == LadderState(k=2, M=1.0, S=4, R=INF)


def test_oracle_increasing():
    tau, state = first_regeneration_oracle(np.arange(10), CensorPolicy(8))
    assert tau == 1
    assert state.k == 1 and state.R == INF


def test_oracle_monotone_down_is_censored():
    with pytest.raises(Censored):
        first_regeneration_oracle([0, -1, -2, -3], CensorPolicy(0))


def test_oracle_guard_censors():
    with pytest.raises(Censored) as exc:
        first_regeneration_oracle(np.arange(10), CensorPolicy(9))
    assert exc.value.candidate == 1


def test_detect_hand_traces():
    assert detect_regenerations([0, 1, 2, 1, 2, 3, 4, 5], CensorPolicy(2)).times.tolist() == [1, 5]
    assert detect_regenerations(np.arange(10), CensorPolicy(0)).times.tolist() == list(range(1, 10))
    r = detect_regenerations([0, 1, 0, 1, 2, 3, 4, 5], CensorPolicy(3))
    assert r.times.tolist() == [4]
    # candidate 5 has only 2 confirming steps
    assert r.censored_tail_from == 5


def test_detect_no_censoring_marker():
    r = detect_regenerations([0, -1, -2], CensorPolicy(0))
    assert len(r) == 0 and r.censored_tail_from == 3


# ------------------------------------------------------- oracle equivalence
steps = st.lists(st.sampled_from([-1, 0, 1, 1]), min_size=0, max_size=300)


def _proj(increments):
    return np.concatenate(([0.0], np.cumsum(increments, dtype=np.float64)))


@settings(max_examples=300, deadline=None)
@given(steps, st.integers(0, 40))
def test_detect_matches_oracle(increments, guard):
    proj = _proj(increments)
    assert detect_regenerations(proj, CensorPolicy(guard)) == regenerations_by_oracle(proj, CensorPolicy(guard))


@settings(max_examples=200, deadline=None)
@given(steps, st.integers(0, 40))
def test_accepted_times_are_permanent_records(increments, guard):
    proj = _proj(increments)
    r = detect_regenerations(proj, CensorPolicy(guard))
    prev = 0
    for tau in r.times:
        assert proj[tau] > proj[prev: tau].max()
        assert proj[tau:].min() >= proj[tau]
        assert tau + guard <= r.horizon
        prev = tau


@settings(max_examples=200, deadline=None)
@given(steps, st.integers(0, 20), st.integers(0, 20))
def test_larger_guard_gives_prefix(increments, g1, g2):
    proj = _proj(increments)
    lo, hi = sorted((g1, g2))
    a = detect_regenerations(proj, CensorPolicy(lo)).times.tolist()
    b = detect_regenerations(proj, CensorPolicy(hi)).times.tolist()
    assert a[: len(b)] == b


@settings(max_examples=200, deadline=None)
@given(steps, st.integers(0, 20))
def test_shift_consistency(increments, guard):
    proj = _proj(increments)
    r = detect_regenerations(proj, CensorPolicy(guard))
    if len(r) == 0:
        return
    t1 = r.times[0]
    rest = detect_regenerations(proj[t1:] - proj[t1], CensorPolicy(guard))
    assert (rest.times + t1).tolist() == r.times[1:].tolist()


def test_simulated_paths_match_oracle():
    model = preset("perturbed")
    for i in range(20):
        t = simulate(EnvironmentView(model, i), (0, 0), 5000, WalkSeed(100 + i))
        p = projection(t, (1.0, 0.0))
        assert detect_regenerations(p, CensorPolicy(300)) == regenerations_by_oracle(p, CensorPolicy(300))


def test_diagonal_direction_matches_oracle():
    s = 1 / np.sqrt(2)
    t = simulate(EnvironmentView(preset("drifted"), 1), (0, 0), 5000, WalkSeed(3))
    p = projection(t, (s, s))
    r = detect_regenerations(p, CensorPolicy(200))
    assert len(r) > 10
    assert r == regenerations_by_oracle(p, CensorPolicy(200))


# ------------------------------------------------------------------ samples
def _traj(points):
    pos = np.array(points, dtype=np.int64)
    return Trajectory(pos, np.zeros(len(pos) - 1, dtype=np.int8))


def test_extract_samples_differencing():
    pts = [(0, 0), (1, 0), (1, 1), (2, 1), (3, 1), (4, 1)]
    s = extract_samples(_traj(pts), RegenerationSequence(np.array([1, 5]), 6, 5, 0))
    assert s.delta_tau.tolist() == [1, 4]
    assert s.delta_x.tolist() == [[1, 0], [3, 1]]
    assert s.first_block.tolist() == [True, False]
    np.testing.assert_allclose(s.block_sup, [1.0, np.sqrt(10)])


def test_extract_samples_needs_two():
    with pytest.raises(InsufficientRegenerations):
        extract_samples(_traj([(0, 0), (1, 0)]), RegenerationSequence(np.array([1]), 2, 1, 0))


def test_telescoping():
    t = simulate(EnvironmentView(preset("drifted"), 0), (0, 0), 10**4, WalkSeed(0))
    r = detect_regenerations(projection(t, (1.0, 0.0)), CensorPolicy(500))
    s = extract_samples(t, r)
    assert s.later().delta_tau.sum() == r.times[-1] - r.times[0]
    np.testing.assert_array_equal(s.delta_x.sum(axis=0), t.positions[r.times[-1]])


def test_z_increment_examples():
    s = RegenSamples(np.array([4]), np.array([[3, 1]]), np.zeros(1), np.array([False]))
    assert z_increment(s, (0.5, 0.0), (1.0, 0.0)).tolist() == [1.0]
    assert z_increment(s, (0.75, 0.25), (1.0, 0.0)).tolist() == [0.0]
    assert z_increment(s, (0.5, 0.0), (-1.0, 0.0)).tolist() == [-1.0]


def test_count_kn_examples():
    r = RegenerationSequence(np.array([1, 5, 9]), 20, 20, 0)
    assert count_kn(r, 6) == 2
    assert count_kn(r, 0) == 0
    assert count_kn(r, 1) == 1


def test_count_kn_undetermined():
    r = RegenerationSequence(np.array([1, 5, 9]), 12, 20, 0)
    with pytest.raises(Undetermined):
        count_kn(r, 12)
    with pytest.raises(Undetermined):
        count_kn(r, 21)


def test_late_drops_count_censoring_bias():
    # candidate 1 falls back below level 1 only after 3 steps (> guard 2)
    r = detect_regenerations([0, 1, 1, 1, 0, 1, 2, 3], CensorPolicy(2))
    assert (r.rejected, r.late_drops) == (1, 1)
    assert detect_regenerations([0, 1, 1, 1, 0, 1, 2, 3], CensorPolicy(3)).late_drops == 0
