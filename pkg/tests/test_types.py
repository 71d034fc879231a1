import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sparsegc.types import (
    CoefficientModel,
    DataError,
    EdgeIndex,
    GraphSample,
    PenaltyParams,
    SampleSet,
    SolverConfig,
    as_graph_matrix,
    devectorize_upper,
    vectorize_upper,
)

from conftest import random_symmetric


def test_vectorize_row_major():
    A = np.zeros((3, 3))
    A[0, 1] = A[1, 0] = 2
    A[0, 2] = A[2, 0] = 5
    A[1, 2] = A[2, 1] = 7
    assert vectorize_upper(A, EdgeIndex(3)).tolist() == [2, 5, 7]


def test_devectorize_example():
    A = devectorize_upper([2, 5, 7], EdgeIndex(3))
    assert A.tolist() == [[0, 2, 5], [2, 0, 7], [5, 7, 0]]


def test_zero_cases():
    assert vectorize_upper(np.zeros((4, 4)), EdgeIndex(4)).tolist() == [0.0] * 6
    assert np.array_equal(devectorize_upper(np.zeros(6), EdgeIndex(4)), np.zeros((4, 4)))


def test_round_trip_random(rng):
    idx = EdgeIndex(8)
    for _ in range(100):
        A = random_symmetric(rng, 8)
        assert np.array_equal(devectorize_upper(vectorize_upper(A, idx), idx), A)
    for _ in range(20):
        v = rng.normal(size=28)
        assert np.array_equal(vectorize_upper(devectorize_upper(v, idx), idx), v)


@given(st.integers(2, 30))
def test_pair_list_is_bijection(n):
    idx = EdgeIndex(n)
    pairs = idx.pair_list
    assert len(pairs) == len(set(pairs)) == n * (n - 1) // 2
    assert all(i < j for i, j in pairs)
    assert pairs == sorted(pairs)
    for k, (i, j) in enumerate(pairs):
        assert idx.position(i, j) == idx.position(j, i) == k


def test_from_num_edges():
    assert EdgeIndex.from_num_edges(1770).num_nodes == 60
    with pytest.raises(ValueError):
        EdgeIndex.from_num_edges(7)


def test_vectorize_errors():
    idx = EdgeIndex(3)
    with pytest.raises(DataError):
        vectorize_upper(np.zeros((4, 4)), idx)
    A = np.zeros((3, 3))
    A[0, 1] = 1.0
    with pytest.raises(DataError):
        vectorize_upper(A, idx)
    with pytest.raises(DataError):
        devectorize_upper(np.zeros(4), idx)


def test_symmetry_tolerance_symmetrizes():
    A = np.array([[0, 1.0, 2], [1.0 + 1e-13, 0, 3], [2, 3, 0]])
    out = as_graph_matrix(A)
    assert np.array_equal(out, out.T)
    A[1, 0] = 1.0 + 1e-9
    with pytest.raises(DataError):
        as_graph_matrix(A)


@pytest.mark.parametrize(
    "A",
    [
        np.array([[1.0, 0], [0, 0]]),
        np.array([[0, np.nan], [np.nan, 0]]),
        np.zeros((2, 3)),
    ],
)
def test_graph_matrix_rejects(A):
    with pytest.raises(DataError):
        as_graph_matrix(A)


def test_graph_sample_label():
    with pytest.raises(DataError):
        GraphSample(np.zeros((3, 3)), 0, "x")
    s = GraphSample(np.zeros((3, 3)), -1, "x")
    assert s.num_nodes == 3


def test_sample_set_rejects_mixed_sizes():
    with pytest.raises(DataError):
        SampleSet([GraphSample(np.zeros((3, 3)), 1, "a"), GraphSample(np.zeros((4, 4)), -1, "b")])


def test_sample_set_design_matrix(rng):
    X = rng.normal(size=(5, 6))
    data = SampleSet.from_arrays(X, [1, -1, 1, -1, 1])
    assert np.array_equal(data.X, X)
    assert data.class_counts() == (3, 2)
    assert data.subset([1, 3]).class_counts() == (0, 2)
    with pytest.raises(DataError):
        data.subset([1, 3]).require_both_classes()


@pytest.mark.parametrize("kw", [{"lam": -1, "rho": 0}, {"lam": 1, "rho": np.inf}, {"lam": 1, "rho": 1, "gamma": -1}])
def test_penalty_params_ranges(kw):
    with pytest.raises(ValueError):
        PenaltyParams(**kw)


@pytest.mark.parametrize("kw", [{"delta": 1.0}, {"alpha": 0.5}, {"admm_mu": 0}, {"max_outer_iter": 0}])
def test_solver_config_ranges(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)


def test_admm_tolerance_schedule():
    c = SolverConfig()
    assert c.admm_tol(1) == 1e-4
    assert c.admm_tol(10) == pytest.approx(1e-5)
    assert c.admm_tol(10**6) == 1e-8


@settings(max_examples=50)
@given(arrays(np.float64, (5, 5), elements=st.sampled_from([0.0, 0.0, 1.5, -2.0])))
def test_coefficient_counts(M):
    C = np.triu(M, 1)
    C = C + C.T
    model = CoefficientModel(C, 0.0)
    assert model.active_edges == int(np.count_nonzero(np.triu(C, 1)))
    assert model.active_nodes == int(np.sum(np.any(C != 0, axis=1)))
    assert model.selected_edges().sum() == model.active_edges
    assert model.is_symmetric


def test_coefficient_model_is_read_only():
    model = CoefficientModel(np.zeros((3, 3)), 1.0)
    with pytest.raises(ValueError):
        model.coefficients[0, 1] = 1.0
    neg = model.negated()
    assert neg.intercept == -1.0
