import json

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from conftest import gammas, geometries, seeds, sizes
from tdgeo.errors import InvalidProbability, NotStochastic, ParseError, Periodic, Reducible, ShapeMismatch
from tdgeo.mrp import (
    MarkovRewardProcess,
    cycle_mrp,
    is_reversible,
    k_step_matrix,
    mrp_from_json,
    mrp_to_json,
    mu_norm,
    random_mrp,
    reversible_mrp,
    td_matrix,
    validate,
)


@given(geometries())
def test_stationary_matches_left_eigenvector(g):
    w, vl = scipy.linalg.eig(g.P, left=True, right=False)
    v = np.real(vl[:, np.argmin(np.abs(w - 1))])
    v /= v.sum()
    assert np.allclose(g.mu, v, atol=1e-10)


@given(geometries())
def test_value_matches_neumann_series(g):
    V, term = np.zeros(g.n), g.R.copy()
    for _ in range(5000):
        V += term
        term = g.gamma * (g.P @ term)
        if np.abs(term).max() < 1e-15:
            break
    assert np.allclose(g.V_star, V, atol=1e-8)


@given(geometries())
def test_symmetric_part_positive_definite(g):
    assert np.linalg.eigvalsh(g.S_A)[0] > 0
    assert np.allclose(g.S_A + g.R_A, g.A)
    assert np.allclose(g.R_A, -g.R_A.T)


@given(geometries(), seeds)
def test_transition_is_mu_nonexpansive(g, seed):
    v = np.random.default_rng(seed).normal(size=(g.n, 50))
    for col in v.T:
        assert mu_norm(g, g.P @ col) <= mu_norm(g, col) * (1 + 1e-12)


@given(geometries(), st.integers(1, 6))
def test_k_step_matrix(g, k):
    A_k, S_k, R_k = k_step_matrix(g, k)
    expected = g.D_mu @ (np.eye(g.n) - np.linalg.matrix_power(g.gamma * g.P, k))
    assert np.allclose(A_k, expected, atol=1e-14)
    assert np.allclose(S_k + R_k, A_k)


def test_k_step_rejects_zero():
    with pytest.raises(ValueError):
        k_step_matrix(td_matrix(cycle_mrp()), 0)


def test_bound_constant():
    g = td_matrix(random_mrp(4, 0.9, 3))
    r = (np.eye(4) - 0.9 * g.P) @ g.V_star
    assert g.B == pytest.approx(np.sqrt(g.mu @ r**2) / 0.1)


def test_cycle_chain_is_doubly_stochastic():
    g = td_matrix(cycle_mrp(3, 0.1, 0.5, 0.9))
    assert np.allclose(g.mu, 1 / 3)
    assert not is_reversible(g)


def test_reversible_builder():
    assert is_reversible(td_matrix(reversible_mrp(5, 0.9, 2)), tol=1e-10)


def test_transition_rewards_are_averaged():
    P = np.array([[0.5, 0.5], [0.2, 0.8]])
    r = np.array([[1.0, 3.0], [0.0, 10.0]])
    g = td_matrix(MarkovRewardProcess(P, r, 0.5))
    assert np.allclose(g.R, [2.0, 8.0])


@pytest.mark.parametrize("P, err", [
    ([[0.0, 1.0], [1.0, 0.0]], Periodic),
    ([[1.0, 0.0], [0.5, 0.5]], Reducible),
    ([[1.2, -0.2], [0.5, 0.5]], NotStochastic),
    ([[0.5, 0.4], [0.5, 0.5]], NotStochastic),
    ([[np.nan, 1.0], [0.5, 0.5]], NotStochastic),
])
def test_invalid_chains(P, err):
    with pytest.raises(err):
        validate(P)


def test_near_stochastic_rows_are_renormalized():
    P = np.array([[0.5, 0.5 + 5e-13], [0.3, 0.7]])
    m = MarkovRewardProcess(P, [0, 0], 0.9)
    assert np.allclose(m.P.sum(axis=1), 1.0, atol=1e-15)


def test_gamma_range():
    with pytest.raises(InvalidProbability):
        MarkovRewardProcess([[0.5, 0.5], [0.5, 0.5]], [0, 0], 1.0)


@given(sizes, gammas, seeds)
def test_json_round_trip(n, gamma, seed):
    m = random_mrp(n, gamma, seed)
    text = mrp_to_json(m)
    assert np.array_equal(json.loads(text)["P"], m.P)
    back = mrp_from_json(text)
    # row renormalization on load may move the last bit
    assert np.allclose(back.P, m.P, rtol=0, atol=1e-15)
    assert np.array_equal(back.reward, m.reward) and back.gamma == m.gamma


def test_json_error_position():
    with pytest.raises(ParseError, match="line 2, column"):
        mrp_from_json('{"n": 2,\n  "P": [}')


def test_json_rejects_nan_and_shape():
    with pytest.raises(ParseError):
        mrp_from_json('{"n": 2, "P": [[NaN, 1], [0.5, 0.5]], "reward": {"vector": [0, 0]}, "gamma": 0.9}')
    bad = {"n": 3, "P": [[0.5, 0.5], [0.5, 0.5]], "reward": {"vector": [0, 0]}, "gamma": 0.9}
    with pytest.raises(ShapeMismatch):
        mrp_from_json(json.dumps(bad))
