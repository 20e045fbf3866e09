import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from conftest import seeds
from tdgeo import approximators as ap
from tdgeo.errors import DivergedBeyondRange, NoComplexEigenvalue, RankDeficient, ShapeMismatch
from tdgeo.mrp import cycle_mrp, random_mrp, reversible_mrp, td_matrix
from tdgeo.spectral import tangent_kernel_condition
from tdgeo.verify import divergence_premise


def central_diff(f, theta, h=1e-6):
    cols = []
    for j in range(theta.size):
        e = np.zeros_like(theta)
        e[j] = h
        cols.append((f(theta + e) - f(theta - e)) / (2 * h))
    return np.column_stack(cols)


def complex_step(f, theta, h=1e-30):
    cols = []
    for j in range(theta.size):
        e = np.zeros(theta.size, dtype=complex)
        e[j] = 1j * h
        cols.append(f(theta + e).imag / h)
    return np.column_stack(cols)


def square_forward(Phi, Ws, theta):
    """Plain re-implementation that also accepts complex parameters."""
    out, i = Phi.astype(complex), 0
    for shape in Ws:
        size = shape[0] * shape[1]
        out = (out @ theta[i:i + size].reshape(shape)) ** 2
        i += size
    return out[:, 0]


@given(seeds, st.integers(1, 3))
def test_square_network_jacobian_complex_step(seed, depth):
    rng = np.random.default_rng(seed)
    Phi = rng.normal(size=(5, 3))
    net = ap.homogeneous_network([3] * (depth - 1) + [1], Phi, "square", seed)
    theta = rng.normal(size=net.param_dim)
    J_cs = complex_step(lambda t: square_forward(Phi, net.shapes, t), theta)
    assert np.allclose(net.jacobian(theta), J_cs, rtol=1e-10, atol=1e-12)
    assert np.allclose(net.value(theta), square_forward(Phi, net.shapes, theta).real)


@given(seeds, st.integers(1, 3))
def test_relu_network_jacobian_finite_difference(seed, depth):
    rng = np.random.default_rng(seed)
    net = ap.homogeneous_network([4] * (depth - 1) + [1], rng.normal(size=(4, 3)), "relu", seed)
    theta = rng.normal(size=net.param_dim)
    if net.min_preactivation(theta) < 1e-3:
        return
    assert np.allclose(net.jacobian(theta), central_diff(net.value, theta), atol=1e-6)


@given(seeds, st.sampled_from(["relu", "square"]), st.integers(1, 3),
       st.floats(0.1, 5.0))
def test_homogeneity_degree(seed, act, depth, alpha):
    rng = np.random.default_rng(seed)
    net = ap.homogeneous_network([3] * (depth - 1) + [1], rng.normal(size=(4, 2)), act, seed)
    p = 1 if act == "relu" else 2
    assert net.degree == sum(p ** j for j in range(1, depth + 1))
    theta = rng.normal(size=net.param_dim)
    f = net.value(theta)
    assert np.allclose(net.value(alpha * theta), alpha ** net.degree * f, rtol=1e-9, atol=1e-12)
    assert np.allclose(net.jacobian(theta) @ theta, net.degree * f, rtol=1e-9, atol=1e-12)


def test_layer_contractions_sum_to_degree():
    rng = np.random.default_rng(3)
    net = ap.homogeneous_network([3, 3, 1], rng.normal(size=(4, 2)), "square", 3)
    theta = rng.normal(size=net.param_dim)
    f = net.value(theta)
    for c, factor in zip(net.layer_euler(theta), [8, 4, 2]):
        assert np.allclose(c, factor * f, rtol=1e-10)


def test_network_shapes():
    with pytest.raises(ShapeMismatch):
        ap.homogeneous_network([3, 2], np.eye(3))
    net = ap.homogeneous_network([1], np.eye(3))
    with pytest.raises(ShapeMismatch):
        net.value(np.zeros(4))


def test_residual_network():
    rng = np.random.default_rng(0)
    Phi = rng.normal(size=(4, 2))
    res = ap.residual_network(Phi, {"layer_dims": [3, 1], "activation": "square"}, seed=1)
    theta = rng.normal(size=res.param_dim)
    t1, t2 = res.split(theta)
    assert np.allclose(res.value(theta), Phi @ t1 + res.inner.value(t2))
    assert np.allclose(res.jacobian(theta), central_diff(res.value, theta), atol=1e-6)
    assert not ap.check_homogeneity(res, [theta]).passed
    with pytest.raises(RankDeficient):
        ap.residual_network(np.ones((4, 2)))


@given(seeds, st.floats(0.0, 0.9))
def test_perturbed_tabular_condition_bound(seed, beta):
    approx = ap.perturbed_tabular(4, beta, seed)
    rng = np.random.default_rng(seed)
    for theta in rng.normal(scale=3.0, size=(20, 4)):
        J = approx.jacobian(theta)
        assert np.allclose(J, central_diff(approx.value, theta), atol=1e-6)
        assert tangent_kernel_condition(J) <= approx.kappa_bound() * (1 + 1e-9)


def test_linear_fixed_point_orthogonality():
    g = td_matrix(random_mrp(6, 0.9, 4))
    Phi = np.random.default_rng(1).normal(size=(6, 2))
    theta, bound = ap.linear_fixed_point(Phi, g)
    assert np.allclose(Phi.T @ g.A @ (Phi @ theta - g.V_star), 0, atol=1e-12)
    Pi = ap.mu_projection(Phi, g.mu)
    assert np.allclose(Pi @ Pi, Pi) and np.allclose(Pi @ Phi, Phi)


@pytest.fixture
def spiral():
    g = td_matrix(cycle_mrp(3, 0.0, 0.5, 0.9))
    return g, ap.construct_divergent(g)


def test_divergent_curve_matches_expm(spiral):
    _, d = spiral
    for t in (-3.0, 0.0, 0.7, 25.0):
        assert np.allclose(d.curve(t), scipy.linalg.expm((d.Q + d.epsilon * np.eye(3)) * t) @ d.V0, atol=1e-10)
    assert np.allclose(d.jacobian([1.3]), central_diff(d.value, np.array([1.3])), atol=1e-6)


def test_divergent_rotation_preserves_norm(spiral):
    _, d = spiral
    R = scipy.linalg.expm(d.Q * 2.1)
    assert np.linalg.norm(R @ d.V0) == pytest.approx(np.linalg.norm(d.V0))
    assert np.allclose(d.Q, -d.Q.T)


def test_divergent_premise_holds(spiral):
    g, d = spiral
    assert divergence_premise(d, g.A) <= 1e-12
    assert 0 < d.epsilon


@given(seeds)
def test_divergent_premise_on_random_chains(seed):
    g = td_matrix(random_mrp(5, 0.9, seed))
    try:
        d = ap.construct_divergent(g)
    except NoComplexEigenvalue:
        return
    assert divergence_premise(d, g.A, n_samples=200) <= 1e-10


def test_extension_is_invisible_to_first_coordinate():
    g = td_matrix(random_mrp(5, 0.9, 7))
    d = ap.construct_divergent(g, extension_rank=3)
    basis = d.U / np.linalg.norm(d.U, axis=0)
    assert np.allclose(basis.T @ g.A @ d.W, 0, atol=1e-12)
    assert np.linalg.matrix_rank(d.jacobian(np.array([0.5, 1.0, 2.0, 3.0]))) == 4


def test_divergent_refuses_real_spectrum():
    with pytest.raises(NoComplexEigenvalue) as info:
        ap.construct_divergent(td_matrix(reversible_mrp(4, 0.9, 0)))
    assert len(info.value.eigenvalues) == 4


def test_divergent_range_guard(spiral):
    _, d = spiral
    with pytest.raises(DivergedBeyondRange):
        d.curve(800.0 / d.epsilon)


def test_complex_eigenpair_phase():
    lam, v = ap.complex_eigenpair(td_matrix(cycle_mrp()).A)
    assert lam.imag > 0
    assert abs(v.real @ v.imag) < 1e-12
    assert np.linalg.norm(v.real) >= np.linalg.norm(v.imag)


@pytest.mark.parametrize("make", [
    lambda g: ap.tabular(3),
    lambda g: ap.linear(np.arange(6.0).reshape(3, 2) + np.eye(3, 2)),
    lambda g: ap.homogeneous_network([2, 1], np.eye(3), "square", 1),
    lambda g: ap.residual_network(np.ones((3, 1)), seed=2),
    lambda g: ap.perturbed_tabular(3, 0.3, 1),
    lambda g: ap.construct_divergent(g, extension_rank=1),
])
def test_spec_round_trip(make):
    g = td_matrix(cycle_mrp())
    a = make(g)
    b = ap.approximator_from_spec(a.to_spec())
    theta = np.linspace(-0.4, 0.6, a.param_dim)
    assert np.allclose(a.value(theta), b.value(theta))
    assert np.allclose(a.jacobian(theta), b.jacobian(theta))
