import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import assume, given

from conftest import geometries
from tdgeo.mrp import cycle_mrp, random_mrp, reversible_mrp, td_matrix
from tdgeo.spectral import (
    decode_inf,
    effective_reversibility,
    gershgorin_smin_bound,
    k_step_lower_bound,
    lambda2,
    reversibility_coefficient,
    reversibility_quotient,
    reversibility_report,
    tangent_kernel_condition,
    _encode_inf,
)
from tdgeo.verify import verify_kstep_proposition


@given(geometries())
def test_coefficient_matches_generalized_eigenproblem(g):
    rho = reversibility_coefficient(g.S_A, g.R_A, g.A)
    M = g.S_A.T @ g.S_A + g.A.T @ g.A
    top = scipy.linalg.eigh(g.R_A.T @ g.R_A, M, eigvals_only=True)[-1]
    if top < 1e-20:
        assert math.isinf(rho) or rho > 1e15
    else:
        assert rho == pytest.approx(1 / top, rel=1e-6)


@given(geometries())
def test_quotient_never_below_coefficient(g):
    rho = reversibility_coefficient(g.S_A, g.R_A, g.A)
    assume(math.isfinite(rho))
    for V in np.random.default_rng(0).normal(size=(30, g.n)):
        assert reversibility_quotient(g.S_A, g.R_A, g.A, V) >= rho * (1 - 1e-9)


def test_symmetric_matrix_is_infinite():
    A = np.array([[2.0, 0.3], [0.3, 1.0]])
    assert reversibility_coefficient(A, np.zeros((2, 2)), A) == math.inf
    g = td_matrix(reversible_mrp(4, 0.9, 0))
    assert reversibility_report(g).rho == math.inf


def test_cycle_chain_is_strongly_nonreversible():
    rep = reversibility_report(td_matrix(cycle_mrp(3, 0.0, 0.5, 0.9)))
    assert rep.rho < 10
    assert rep.lambda2 == pytest.approx(0.5)


def test_lambda2_of_rank_one_chain():
    P = np.tile([0.2, 0.3, 0.5], (3, 1))
    assert lambda2(P) == pytest.approx(0.0, abs=1e-12)


def test_condition_number():
    J = np.diag([3.0, 1.0])
    assert tangent_kernel_condition(J) == pytest.approx(9.0)
    assert tangent_kernel_condition(np.ones((3, 2))) == math.inf
    assert tangent_kernel_condition(np.array([[1.0, 0.0], [2.0, 0.0]])) == math.inf


@given(geometries())
def test_gershgorin_part_of_k_step_bound(g):
    for k in range(1, 8):
        S_k = 0.5 * (g.D_mu @ (np.eye(g.n) - np.linalg.matrix_power(g.gamma * g.P, k)))
        S_k = S_k + S_k.T
        assert np.linalg.eigvalsh(S_k)[0] >= gershgorin_smin_bound(g.mu, g.gamma, k) - 1e-9


def test_k_step_rho_bound_fails_for_non_normal_chain():
    # ||P^k - 1 mu^T|| overshoots lambda2^k by an order of magnitude on this chain
    g = td_matrix(random_mrp(7, 0.5, 1012966438))
    rep = verify_kstep_proposition(g)
    assert not rep.passed
    rows = rep.measured["per_k"]
    assert all(r["lambda_min_S_k"] >= r["gershgorin_bound"] - 1e-9 for r in rows)
    assert any(r["sqrt_rho_k"] < r["lower_bound"] for r in rows)


def test_k_step_bound_holds_on_reversible_chain():
    assert verify_kstep_proposition(td_matrix(reversible_mrp(5, 0.9, 1))).passed


def test_k_step_bound_value():
    mu = np.array([0.25, 0.75])
    assert k_step_lower_bound(mu, 0.5, 2, 0.5) == pytest.approx(0.25 / 0.75 * 0.75 * 16)
    assert k_step_lower_bound(mu, 0.5, 2, 0.0) == math.inf


def test_effective_reversibility_k1_matches():
    g = td_matrix(random_mrp(5, 0.9, 8))
    assert effective_reversibility(g.A) == pytest.approx(reversibility_coefficient(g.S_A, g.R_A, g.A))


def test_inf_encoding_round_trip():
    obj = {"a": math.inf, "b": [1.0, -math.inf], 3: 2.0}
    assert decode_inf(_encode_inf(obj)) == {"a": math.inf, "b": [1.0, -math.inf], "3": 2.0}
