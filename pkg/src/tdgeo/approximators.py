"""Parametric value-function families ``theta -> V(theta)`` with analytic Jacobians.

All approximators take a flat parameter vector and return an n-vector of
state values; ``jacobian`` returns the n x d matrix ``dV/dtheta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm, null_space

from .errors import DivergedBeyondRange, NoComplexEigenvalue, RankDeficient, ShapeMismatch
from .mrp import TDGeometry


class Approximator:
    """Base class. Subclasses set ``param_dim``/``state_dim`` and implement
    ``value`` and ``jacobian``; ``degree`` is the homogeneity degree or None."""

    param_dim: int
    state_dim: int
    degree = None
    kind = "abstract"

    def value(self, theta) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, theta) -> np.ndarray:
        raise NotImplementedError

    def value_and_jacobian(self, theta):
        return self.value(theta), self.jacobian(theta)

    def to_spec(self) -> dict:
        raise NotImplementedError

    def _check(self, theta):
        theta = np.asarray(theta, dtype=float).ravel()
        if theta.size != self.param_dim:
            raise ShapeMismatch(f"expected {self.param_dim} parameters, got {theta.shape}")
        return theta


class Tabular(Approximator):
    kind = "tabular"
    degree = 1

    def __init__(self, n: int):
        if n < 1:
            raise ValueError("n must be >= 1")
        self.param_dim = self.state_dim = n

    def value(self, theta):
        return self._check(theta).copy()

    def jacobian(self, theta):
        self._check(theta)
        return np.eye(self.state_dim)

    def to_spec(self):
        return {"kind": self.kind, "n": self.state_dim}


class Linear(Approximator):
    kind = "linear"
    degree = 1

    def __init__(self, Phi):
        Phi = np.atleast_2d(np.asarray(Phi, dtype=float))
        if np.linalg.matrix_rank(Phi) < Phi.shape[1]:
            raise RankDeficient(f"feature matrix of shape {Phi.shape} is not full column rank")
        self.Phi = Phi
        self.state_dim, self.param_dim = Phi.shape

    def value(self, theta):
        return self.Phi @ self._check(theta)

    def jacobian(self, theta):
        self._check(theta)
        return self.Phi.copy()

    def to_spec(self):
        return {"kind": self.kind, "Phi": self.Phi.tolist()}


def tabular(n: int) -> Tabular:
    return Tabular(n)


def linear(Phi) -> Linear:
    return Linear(Phi)


def mu_projection(Phi, mu) -> np.ndarray:
    """mu-weighted orthogonal projector onto span(Phi)."""
    Phi = np.atleast_2d(np.asarray(Phi, dtype=float))
    D = np.diag(mu)
    return Phi @ np.linalg.solve(Phi.T @ D @ Phi, Phi.T @ D)


def linear_fixed_point(Phi, geometry: TDGeometry, matrix=None):
    """Linear TD fixed point ``theta* = (Phi^T A Phi)^{-1} Phi^T A V*`` and the
    classical error bound ``|V* - Pi V*|_mu / (1 - gamma)``."""
    from .errors import SolveFailure
    from .mrp import mu_norm

    Phi = np.atleast_2d(np.asarray(Phi, dtype=float))
    A = geometry.A if matrix is None else matrix
    M = Phi.T @ A @ Phi
    if np.linalg.cond(M) > 1e14:
        raise SolveFailure("Phi^T A Phi is numerically singular")
    theta = np.linalg.solve(M, Phi.T @ A @ geometry.V_star)
    Pi = mu_projection(Phi, geometry.mu)
    bound = mu_norm(geometry, geometry.V_star - Pi @ geometry.V_star) / (1.0 - geometry.gamma)
    err = mu_norm(geometry, Phi @ theta - geometry.V_star)
    if matrix is None and err > bound + 1e-9:
        raise SolveFailure(f"linear TD error {err} exceeds bound {bound}")
    return theta, bound


# --- homogeneous networks -----------------------------------------------------

_ACTIVATIONS = {
    # relu'(0) := 0, so sigma(x) = sigma'(x) x holds at the kink as well
    "relu": (lambda x: np.maximum(x, 0.0), lambda x: (x > 0).astype(float), 1),
    "square": (lambda x: x * x, lambda x: 2.0 * x, 2),
}


class HomogeneousNetwork(Approximator):
    """``f(theta) = sigma(... sigma(sigma(Phi theta_1) theta_2) ... theta_L)``.

    Rows of ``Phi`` are states, so the network maps each state's feature row
    to a scalar. ``theta_i`` has shape ``(dims[i-1], dims[i])`` with
    ``dims[0] = Phi.shape[1]`` and ``dims[-1] = 1``. Parameters are the
    row-major concatenation of the layer matrices.
    """

    kind = "homogeneous"

    def __init__(self, Phi, weights, activation="relu"):
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.Phi = np.atleast_2d(np.asarray(Phi, dtype=float))
        self.activation = activation
        self._sigma, self._dsigma, self.p_act = _ACTIVATIONS[activation]
        shapes = [np.shape(w) for w in weights]
        self.dims = [self.Phi.shape[1]] + [s[1] for s in shapes]
        for i, s in enumerate(shapes):
            if len(s) != 2 or s[0] != self.dims[i]:
                raise ShapeMismatch(f"layer {i + 1} has shape {s}, expected ({self.dims[i]}, *)")
        if self.dims[-1] != 1:
            raise ShapeMismatch("last layer must have a single output column")
        self.shapes = shapes
        self.sizes = [a * b for a, b in shapes]
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)])
        self.state_dim = self.Phi.shape[0]
        self.param_dim = int(self.offsets[-1])
        self.theta0 = np.concatenate([np.asarray(w, dtype=float).ravel() for w in weights])
        L = len(shapes)
        self.layer_degrees = [self.p_act ** (L - i) for i in range(L)]
        self.degree = sum(self.layer_degrees)

    @property
    def depth(self) -> int:
        return len(self.shapes)

    def layers(self, theta):
        theta = self._check(theta)
        return [theta[self.offsets[i]:self.offsets[i + 1]].reshape(s) for i, s in enumerate(self.shapes)]

    def _forward(self, theta):
        Ws = self.layers(theta)
        acts, pre = [self.Phi], []
        for W in Ws:
            g = acts[-1] @ W
            pre.append(g)
            acts.append(self._sigma(g))
        return Ws, acts, pre

    def value(self, theta):
        return self._forward(theta)[1][-1][:, 0]

    def jacobian(self, theta):
        return self.value_and_jacobian(theta)[1]

    def value_and_jacobian(self, theta):
        Ws, acts, pre = self._forward(theta)
        n = self.state_dim
        J = np.empty((n, self.param_dim))
        delta = self._dsigma(pre[-1])
        for i in range(self.depth - 1, -1, -1):
            block = acts[i][:, :, None] * delta[:, None, :]
            J[:, self.offsets[i]:self.offsets[i + 1]] = block.reshape(n, -1)
            if i > 0:
                delta = (delta @ Ws[i].T) * self._dsigma(pre[i - 1])
        return acts[-1][:, 0], J

    def layer_euler(self, theta):
        """Per-layer contractions ``dF/dvec(theta_i) . vec(theta_i)``, one n-vector per layer."""
        theta = self._check(theta)
        J = self.jacobian(theta)
        return [J[:, a:b] @ theta[a:b] for a, b in zip(self.offsets[:-1], self.offsets[1:])]

    def min_preactivation(self, theta) -> float:
        return min(float(np.min(np.abs(g))) for g in self._forward(theta)[2])

    def to_spec(self):
        return {
            "kind": self.kind,
            "activation": self.activation,
            "Phi": self.Phi.tolist(),
            "layer_dims": self.dims[1:],
            "weights": [w.tolist() for w in self.layers(self.theta0)],
        }


def homogeneous_network(layer_dims, Phi, activation="relu", seed=0) -> HomogeneousNetwork:
    """Network with ``N(0, 1/fan_in)`` weights. ``layer_dims`` lists hidden and
    output widths, e.g. ``[8, 1]`` for one hidden layer of width 8."""
    Phi = np.atleast_2d(np.asarray(Phi, dtype=float))
    dims = [Phi.shape[1]] + list(layer_dims)
    if dims[-1] != 1:
        raise ShapeMismatch("layer_dims must end with output width 1")
    rng = np.random.default_rng(seed)
    weights = [rng.normal(0.0, 1.0 / math.sqrt(a), size=(a, b)) for a, b in zip(dims[:-1], dims[1:])]
    return HomogeneousNetwork(Phi, weights, activation)


class ResidualHomogeneousNetwork(Approximator):
    """``V(theta_1, theta_2) = Phi theta_1 + g(theta_2)`` with homogeneous ``g``."""

    kind = "residual"
    degree = None

    def __init__(self, Phi, inner: HomogeneousNetwork):
        Phi = np.atleast_2d(np.asarray(Phi, dtype=float))
        if np.linalg.matrix_rank(Phi) < Phi.shape[1]:
            raise RankDeficient("residual feature matrix must have full column rank")
        if inner.state_dim != Phi.shape[0]:
            raise ShapeMismatch(f"inner network outputs {inner.state_dim} states, Phi has {Phi.shape[0]}")
        self.Phi = Phi
        self.inner = inner
        self.linear_dim = Phi.shape[1]
        self.state_dim = Phi.shape[0]
        self.param_dim = self.linear_dim + inner.param_dim

    def split(self, theta):
        theta = self._check(theta)
        return theta[:self.linear_dim], theta[self.linear_dim:]

    def value(self, theta):
        t1, t2 = self.split(theta)
        return self.Phi @ t1 + self.inner.value(t2)

    def jacobian(self, theta):
        return self.value_and_jacobian(theta)[1]

    def value_and_jacobian(self, theta):
        t1, t2 = self.split(theta)
        g, Jg = self.inner.value_and_jacobian(t2)
        return self.Phi @ t1 + g, np.hstack([self.Phi, Jg])

    def to_spec(self):
        return {"kind": self.kind, "Phi": self.Phi.tolist(), "inner": self.inner.to_spec()}


def residual_network(Phi, inner_spec=None, seed=0) -> ResidualHomogeneousNetwork:
    """``inner_spec`` keys: ``layer_dims`` (default ``[4, 1]``), ``activation``
    (default relu), ``features`` (default: random n x 3 matrix from ``seed``)."""
    Phi = np.atleast_2d(np.asarray(Phi, dtype=float))
    spec = dict(inner_spec or {})
    n = Phi.shape[0]
    feats = spec.get("features")
    if feats is None:
        feats = np.random.default_rng([seed, 1]).normal(size=(n, 3))
    inner = homogeneous_network(spec.get("layer_dims", [4, 1]), feats,
                                spec.get("activation", "relu"), seed=seed)
    return ResidualHomogeneousNetwork(Phi, inner)


class PerturbedTabular(Approximator):
    """``V(theta) = theta + beta * tanh(M theta)`` with ``|M|_2 = 1``.

    For ``beta < 1`` the singular values of the Jacobian lie in
    ``[1 - beta, 1 + beta]``, so the map is a global diffeomorphism with
    tangent-kernel condition number at most ``((1 + beta) / (1 - beta))^2``.
    """

    kind = "perturbed_tabular"

    def __init__(self, M, beta: float):
        M = np.asarray(M, dtype=float)
        self.M = M / np.linalg.norm(M, 2)
        self.beta = float(beta)
        self.param_dim = self.state_dim = M.shape[0]

    def value(self, theta):
        theta = self._check(theta)
        return theta + self.beta * np.tanh(self.M @ theta)

    def jacobian(self, theta):
        theta = self._check(theta)
        t = np.tanh(self.M @ theta)
        return np.eye(self.state_dim) + self.beta * (1.0 - t * t)[:, None] * self.M

    def kappa_bound(self) -> float:
        return ((1 + self.beta) / (1 - self.beta)) ** 2 if self.beta < 1 else math.inf

    def to_spec(self):
        return {"kind": self.kind, "M": self.M.tolist(), "beta": self.beta}


def perturbed_tabular(n: int, beta: float, seed=0) -> PerturbedTabular:
    return PerturbedTabular(np.random.default_rng(seed).normal(size=(n, n)), beta)


# --- divergent construction ---------------------------------------------------

_JROT = np.array([[0.0, -1.0], [1.0, 0.0]])


@dataclass(frozen=True, eq=False)
class DivergentApproximator(Approximator):
    """``V(theta, theta_bar) = exp((Q + eps I) theta) V0 + W theta_bar``.

    ``Q`` is rank two with range ``E = span(U)``, where ``U`` holds the real and
    imaginary parts of a complex eigenvector of ``A``. Restricted to ``E`` it
    is a rotation generator oriented against the rotation of ``A``, so the
    curve spirals outward (``|exp(Q theta) V0| = |V0|``) while
    ``V^T Q^T A V <= -(a^2 + b^2) |V|^2 / C`` on ``E``.
    """

    Q: np.ndarray
    epsilon: float
    V0: np.ndarray
    U: np.ndarray
    a: float
    b: float
    C: float
    W: np.ndarray
    rotation_rate: float
    kind = "divergent"

    @property
    def state_dim(self):
        return self.Q.shape[0]

    @property
    def param_dim(self):
        return 1 + self.W.shape[1]

    @property
    def extension_rank(self):
        return self.W.shape[1]

    @property
    def generator(self):
        return self._G

    def __post_init__(self):
        object.__setattr__(self, "_G", self.Q + self.epsilon * np.eye(self.Q.shape[0]))
        w, X = np.linalg.eig(self._G)
        if np.linalg.cond(X) < 1e6:
            object.__setattr__(self, "_eig", (w, X, np.linalg.solve(X, self.V0.astype(complex))))
        else:
            object.__setattr__(self, "_eig", None)

    def curve(self, t: float) -> np.ndarray:
        t = float(t)
        if self.epsilon * abs(t) > 700:
            raise DivergedBeyondRange(f"eps * theta = {self.epsilon * t:.3g} exceeds exp range")
        if self._eig is None:
            return expm(self._G * t) @ self.V0
        w, X, c = self._eig
        return (X @ (np.exp(w * t) * c)).real

    def value(self, theta):
        theta = self._check(theta)
        return self.curve(theta[0]) + self.W @ theta[1:]

    def jacobian(self, theta):
        return self.value_and_jacobian(theta)[1]

    def value_and_jacobian(self, theta):
        theta = self._check(theta)
        c = self.curve(theta[0])
        J = np.empty((c.size, theta.size))
        J[:, 0] = self._G @ c
        if theta.size == 1:
            return c, J
        J[:, 1:] = self.W
        return c + self.W @ theta[1:], J

    def to_spec(self):
        return {
            "kind": self.kind,
            "Q": self.Q.tolist(), "epsilon": self.epsilon, "V0": self.V0.tolist(),
            "U": self.U.tolist(), "a": self.a, "b": self.b, "C": self.C,
            "W": self.W.tolist(), "rotation_rate": self.rotation_rate,
        }


def complex_eigenpair(A, tol=1e-10):
    """Eigenpair of ``A`` with the largest imaginary part (ties: largest real part).

    The eigenvector phase is fixed so that its real and imaginary parts are
    orthogonal with ``|Re| >= |Im|``.
    """
    w, V = np.linalg.eig(np.asarray(A, dtype=float))
    scale = max(1.0, float(np.max(np.abs(w))))
    cand = [i for i in range(len(w)) if w[i].imag > tol * scale]
    if not cand:
        raise NoComplexEigenvalue("A has a purely real spectrum", eigenvalues=np.sort(w.real))
    i = max(cand, key=lambda j: (round(w[j].imag / scale, 10), w[j].real))
    v = V[:, i]
    v = v * np.exp(-0.5j * np.angle(v @ v))
    v = v / np.linalg.norm(v)
    return w[i], v


def construct_divergent(geometry: TDGeometry, epsilon_fraction=0.5, v0_mode="u1",
                        extension_rank=0, matrix=None) -> DivergentApproximator:
    A = geometry.A if matrix is None else np.asarray(matrix, dtype=float)
    n = A.shape[0]
    if not 0 < epsilon_fraction < 1:
        raise ValueError("epsilon_fraction must lie in (0, 1)")
    if not 0 <= extension_rank <= n - 2:
        raise ValueError(f"extension_rank must lie in 0..{n - 2}")
    lam, v = complex_eigenpair(A)
    a, b = float(lam.real), float(lam.imag)
    U = np.column_stack([v.real, v.imag])
    C = float(np.linalg.eigvalsh(U.T @ U)[-1])
    basis = U / np.linalg.norm(U, axis=0)
    # A acts on E = span(U) as Lam in the orthonormal basis
    Lam = basis.T @ A @ basis
    omega = 0.5 * (Lam[1, 0] - Lam[0, 1])
    S = 0.5 * (Lam + Lam.T)
    spread = math.hypot(S[0, 1], 0.5 * (S[0, 0] - S[1, 1]))
    beta = (a * a + b * b) / (C * (abs(omega) - spread))
    Q = basis @ (-math.copysign(beta, omega) * _JROT) @ basis.T
    s_max = float(np.linalg.eigvalsh(S)[-1])
    eps = epsilon_fraction * (a * a + b * b) / (C * max(1.0, s_max))
    if v0_mode == "u1":
        V0 = U[:, 0] / np.linalg.norm(U[:, 0])
    elif v0_mode == "u2":
        V0 = U[:, 1] / np.linalg.norm(U[:, 1])
    elif v0_mode == "sum":
        V0 = basis.sum(axis=1) / math.sqrt(2)
    else:
        raise ValueError(f"unknown v0_mode {v0_mode!r}")
    # directions x with A x orthogonal to E keep theta_dot unaffected
    W = null_space(basis.T @ A)[:, :extension_rank] if extension_rank else np.zeros((n, 0))
    return DivergentApproximator(Q=Q, epsilon=eps, V0=V0, U=U, a=a, b=b, C=C, W=W,
                                 rotation_rate=beta)


def divergent_value(approx: DivergentApproximator, theta: float, theta_bar=None) -> np.ndarray:
    tb = np.zeros(approx.extension_rank) if theta_bar is None else np.asarray(theta_bar, dtype=float)
    return approx.value(np.concatenate([[theta], tb]))


# --- homogeneity --------------------------------------------------------------


@dataclass
class HomogeneityReport:
    passed: bool
    degree: float
    max_scaling_error: float
    max_euler_error: float
    tolerance: float


def _rel(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def check_homogeneity(approx: Approximator, samples, alpha_set=(0.5, 2.0), degree=None,
                      tol=1e-8) -> HomogeneityReport:
    """Test ``f(alpha theta) = alpha^D f(theta)`` and ``J(theta) theta = D f(theta)``.

    Approximators without a declared degree are tested against the degree
    fitted from the first sample, so the report fails when none exists.
    """
    D = degree if degree is not None else approx.degree
    samples = [np.asarray(s, dtype=float) for s in samples]
    if D is None:
        f0 = approx.value(samples[0])
        D = float(approx.jacobian(samples[0]) @ samples[0] @ f0 / max(f0 @ f0, 1e-300))
    scale_err = euler_err = 0.0
    for th in samples:
        f = approx.value(th)
        for alpha in alpha_set:
            scale_err = max(scale_err, _rel(approx.value(alpha * th), alpha ** D * f))
        euler_err = max(euler_err, _rel(approx.jacobian(th) @ th, D * f))
    return HomogeneityReport(passed=max(scale_err, euler_err) < tol, degree=D,
                             max_scaling_error=scale_err, max_euler_error=euler_err, tolerance=tol)


# --- serialization ------------------------------------------------------------


def approximator_from_spec(spec: dict) -> Approximator:
    kind = spec["kind"]
    if kind == "tabular":
        return Tabular(int(spec["n"]))
    if kind == "linear":
        return Linear(spec["Phi"])
    if kind == "homogeneous":
        if "weights" in spec:
            return HomogeneousNetwork(spec["Phi"], [np.asarray(w) for w in spec["weights"]],
                                      spec.get("activation", "relu"))
        return homogeneous_network(spec["layer_dims"], spec["Phi"], spec.get("activation", "relu"),
                                   spec.get("seed", 0))
    if kind == "residual":
        inner = approximator_from_spec(spec["inner"])
        return ResidualHomogeneousNetwork(spec["Phi"], inner)
    if kind == "perturbed_tabular":
        return PerturbedTabular(spec["M"], spec["beta"])
    if kind == "divergent":
        n = len(spec["V0"])
        W = np.asarray(spec.get("W", []), dtype=float).reshape(n, -1)
        return DivergentApproximator(
            Q=np.asarray(spec["Q"]), epsilon=float(spec["epsilon"]), V0=np.asarray(spec["V0"]),
            U=np.asarray(spec["U"]), a=float(spec["a"]), b=float(spec["b"]), C=float(spec["C"]),
            W=W, rotation_rate=float(spec.get("rotation_rate", 0.0)),
        )
    raise ValueError(f"unknown approximator kind {kind!r}")
