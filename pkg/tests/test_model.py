import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from socialfield.model import (
    Additive,
    KernelAveraged,
    ModelParams,
    MultiplicativeMin,
    SigmaKernel,
    StateError,
    SystemState,
    noise_amplitude,
    opinion_drift_pair,
    opinion_drift_threebody,
    spatial_drift_pair,
    total_drift,
)

from oracles import drift_loops, nearest_gap_loops

P = ModelParams(alpha=20, beta=20, radius=0.15, lam=-1.0, dim=2)

coord = st.floats(-1, 1, allow_nan=False)
opinion = st.floats(-2, 2, allow_nan=False)
point = st.tuples(coord, coord)


# -- pair kernels ----------------------------------------------------------------


def test_opinion_pair_collocated():
    assert opinion_drift_pair((0, 0), (0, 0), -1.0, 1.0, P) == pytest.approx(40.0)


def test_opinion_pair_equal_opinions():
    assert opinion_drift_pair((0, 0), (0.1, 0.05), 0.3, 0.3, P) == 0.0


def test_opinion_pair_out_of_range():
    assert opinion_drift_pair((0, 0), (0.2, 0), -1.0, 1.0, P) == 0.0


def test_indicator_closed_at_radius():
    assert opinion_drift_pair((0.0,), (0.15,), 0.0, 1.0, ModelParams(alpha=1, radius=0.15, dim=1)) == 1.0
    assert opinion_drift_pair((0, 0), (0.09, 0.12), 0.0, 1.0, P) == pytest.approx(20.0)


def test_spatial_pair_attraction_and_repulsion():
    np.testing.assert_allclose(spatial_drift_pair((0, 0), (0.1, 0), 1, 1, P), [2.0, 0.0])
    np.testing.assert_allclose(spatial_drift_pair((0, 0), (0.1, 0), 1, -1, P), [-2.0, 0.0])


def test_spatial_pair_zero_opinion_has_no_sign():
    np.testing.assert_array_equal(spatial_drift_pair((0, 0), (0.1, 0), 0.0, -0.7, P), [0.0, 0.0])


def test_threebody_examples():
    p = ModelParams(alpha=1, radius=0.15, lam=-1, dim=2)
    o = (0, 0)
    assert opinion_drift_threebody(o, o, o, 0.0, 1.0, 1.0, p) == pytest.approx(2.0)
    assert opinion_drift_threebody(o, (0.1, 0), (0, 0.1), 0.4, 0.4, 0.4, p) == 0.0
    assert opinion_drift_threebody(o, o, (0.3, 0), 0.0, 1.0, 1.0, p) == 0.0


def test_threebody_similarity_weight():
    p = ModelParams(alpha=1, radius=0.15, lam=-2, dim=2)
    o = (0, 0)
    # peers at 1 and 0.5: exp(-2 * 0.5) * (1 + 0.5)
    assert opinion_drift_threebody(o, o, o, 0.0, 1.0, 0.5, p) == pytest.approx(np.exp(-1.0) * 1.5)


@given(point, point, opinion, opinion)
def test_opinion_pair_antisymmetric(x1, x2, a, b):
    assert opinion_drift_pair(x1, x2, a, b, P) == -opinion_drift_pair(x2, x1, b, a, P)


@given(point, point, opinion, opinion)
def test_pairs_vanish_outside_radius(x1, x2, a, b):
    if np.hypot(x1[0] - x2[0], x1[1] - x2[1]) > P.radius * 1.000001:
        assert opinion_drift_pair(x1, x2, a, b, P) == 0.0
        assert not np.any(spatial_drift_pair(x1, x2, a, b, P))


# -- total drift -------------------------------------------------------------------


def _state(n, seed, box=0.25, d=2):
    rng = np.random.default_rng(seed)
    return SystemState(rng.uniform(-box, box, (n, d)), rng.uniform(-1, 1, n))


def test_single_agent_has_zero_drift():
    s = SystemState([[0.3, -0.1]], [0.7])
    for kernel in ("pairwise", "threebody"):
        dr = total_drift(s, P, kernel)
        assert not np.any(dr.spatial) and not np.any(dr.opinion)


def test_collocated_consensus_has_zero_drift():
    s = SystemState(np.zeros((6, 2)), np.full(6, 0.4))
    dr = total_drift(s, P)
    assert not np.any(dr.spatial) and not np.any(dr.opinion)


def test_three_agents_match_loops():
    x = np.array([[0.0, 0.0], [0.1, 0.0], [0.05, 0.12]])
    th = np.array([0.5, -0.2, 0.9])
    dr = total_drift(SystemState(x, th), P)
    u, v = drift_loops(x, th, P.alpha, P.beta, P.radius)
    np.testing.assert_allclose(dr.spatial, u, rtol=0, atol=1e-13)
    np.testing.assert_allclose(dr.opinion, v, rtol=0, atol=1e-13)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
@pytest.mark.parametrize("seed", range(4))
def test_small_systems_match_loops(n, seed):
    s = _state(n, seed, box=0.12)
    for kernel in ("pairwise", "threebody"):
        dr = total_drift(s, P, kernel)
        u, v = drift_loops(s.positions, s.opinions, P.alpha, P.beta, P.radius, P.lam, kernel == "threebody")
        np.testing.assert_allclose(dr.spatial, u, rtol=0, atol=1e-12)
        np.testing.assert_allclose(dr.opinion, v, rtol=0, atol=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_cell_path_matches_dense(seed):
    s = _state(200, seed, box=0.6)
    a = total_drift(s, P, method="dense")
    b = total_drift(s, P, method="cells")
    np.testing.assert_allclose(a.spatial, b.spatial, rtol=0, atol=1e-12)
    np.testing.assert_allclose(a.opinion, b.opinion, rtol=0, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 30), st.integers(0, 10**6))
def test_mean_opinion_drift_vanishes(n, seed):
    s = _state(n, seed, box=0.2)
    assert abs(np.sum(total_drift(s, P).opinion)) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 25), st.integers(0, 10**6), point)
def test_translation_equivariance(n, seed, shift):
    s = _state(n, seed, box=0.2)
    moved = SystemState(s.positions + np.asarray(shift), s.opinions)
    a, b = total_drift(s, P), total_drift(moved, P)
    np.testing.assert_allclose(a.spatial, b.spatial, rtol=0, atol=1e-12)
    np.testing.assert_allclose(a.opinion, b.opinion, rtol=0, atol=1e-12)


def test_rejects_unknown_kernel_and_bad_lambda():
    s = _state(3, 0)
    with pytest.raises(StateError):
        total_drift(s, P, "nope")
    with pytest.raises(StateError):
        total_drift(s, ModelParams(lam=0.5), "threebody")


def test_linear_and_free_kernels():
    s = SystemState([[1.0, -2.0]], [0.5])
    dr = total_drift(s, P, "linear")
    np.testing.assert_array_equal(dr.spatial, [[-1.0, 2.0]])
    np.testing.assert_array_equal(dr.opinion, [-0.5])
    assert not np.any(total_drift(s, P, "free").opinion)


# -- state validation ------------------------------------------------------------


def test_state_rejects_mismatch_and_nan():
    with pytest.raises(StateError):
        SystemState(np.zeros((3, 2)), np.zeros(2))
    with pytest.raises(StateError):
        SystemState([[np.nan, 0.0]], [0.0])
    with pytest.raises(StateError):
        SystemState(np.zeros((0, 2)), np.zeros(0))


# -- noise amplitudes ------------------------------------------------------------


def test_nearest_gap_hand_example():
    x = [[0, 0], [0.05, 0], [0, 0.1], [0.5, 0.5]]
    th = [0.0, 0.2, -0.5, 0.01]
    _, op = noise_amplitude(SystemState(x, th), MultiplicativeMin(0.05), P)
    assert op[0] == pytest.approx(0.2)


def test_nearest_gap_identical_neighbour_gives_zero():
    _, op = noise_amplitude(SystemState([[0, 0], [0.1, 0]], [0.3, 0.3]), MultiplicativeMin(), P)
    np.testing.assert_array_equal(op, [0.0, 0.0])


def test_isolated_agent_uses_fallback():
    sp, op = noise_amplitude(SystemState([[0, 0], [1, 1]], [0.3, -0.3]), MultiplicativeMin(0.05), P)
    np.testing.assert_array_equal(op, [0.05, 0.05])
    np.testing.assert_array_equal(sp, op)


def test_opinion_only_leaves_space_silent():
    sp, op = noise_amplitude(SystemState([[0, 0], [0.1, 0]], [0.3, 0.1]), MultiplicativeMin(apply_to="opinion-only"), P)
    np.testing.assert_array_equal(sp, [0.0, 0.0])
    np.testing.assert_allclose(op, [0.2, 0.2])


def test_additive_is_constant():
    sp, op = noise_amplitude(_state(7, 1), Additive(0.1, 0.3), P)
    np.testing.assert_array_equal(sp, np.full(7, 0.1))
    np.testing.assert_array_equal(op, np.full(7, 0.3))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 20), st.integers(0, 10**6), st.floats(-3, 3))
def test_nearest_gap_matches_loops_and_is_shift_invariant(n, seed, c):
    s = _state(n, seed, box=0.3)
    _, op = noise_amplitude(s, MultiplicativeMin(0.05), P)
    np.testing.assert_allclose(op, nearest_gap_loops(s.positions, s.opinions, P.radius, 0.05), atol=1e-15)
    _, shifted = noise_amplitude(SystemState(s.positions, s.opinions + c), MultiplicativeMin(0.05), P)
    np.testing.assert_allclose(shifted, op, rtol=0, atol=1e-12)


def test_kernel_averaged_amplitudes():
    x = np.array([[0, 0], [0.1, 0], [1, 1]])
    th = np.array([0.0, 0.3, 1.0])
    spec = KernelAveraged(SigmaKernel("indicator", 0.3), SigmaKernel("gap", 1.0))
    sp, op = noise_amplitude(SystemState(x, th), spec, P)
    # agent 0 sees itself and agent 1 in range
    np.testing.assert_allclose(sp, [0.2, 0.2, 0.1])
    np.testing.assert_allclose(op, [0.1, 0.1, 0.0])
