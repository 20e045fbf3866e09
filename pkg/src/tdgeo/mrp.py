"""Finite Markov reward processes and the TD geometry derived from them.

Everything downstream (spectral quantities, approximators, ODE integration)
consumes a :class:`TDGeometry`, built once per MRP by :func:`td_matrix`.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import (
    InvalidProbability,
    NotStochastic,
    ParseError,
    Periodic,
    PositivityViolation,
    Reducible,
    ShapeMismatch,
    SingularSolve,
)

ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class ValidityCertificate:
    n: int
    scc_count: int
    period: int
    max_row_sum_error: float


@dataclass(frozen=True, eq=False)
class MarkovRewardProcess:
    """Finite chain ``(P, reward, gamma)``.

    ``reward`` is either an n-vector of expected rewards or an n x n matrix of
    transition rewards ``r(s, s')``. Construction validates the chain and
    renormalizes rows that are stochastic only up to ``ROW_SUM_TOL``.
    """

    P: np.ndarray
    reward: np.ndarray
    gamma: float
    certificate: ValidityCertificate = field(init=False, repr=False)

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        reward = np.array(self.reward, dtype=float)
        if not 0.0 <= self.gamma < 1.0 or not math.isfinite(self.gamma):
            raise InvalidProbability(f"gamma must lie in [0, 1), got {self.gamma}")
        cert = validate(P)
        P = P / P.sum(axis=1, keepdims=True)
        n = P.shape[0]
        if reward.shape not in ((n,), (n, n)):
            raise ShapeMismatch(f"reward shape {reward.shape} incompatible with {n} states")
        if not np.all(np.isfinite(reward)):
            raise ShapeMismatch("reward contains non-finite entries")
        P.setflags(write=False)
        reward.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "reward", reward)
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "certificate", cert)

    @property
    def n(self) -> int:
        return self.P.shape[0]

    def __eq__(self, other):
        if not isinstance(other, MarkovRewardProcess):
            return NotImplemented
        return (
            self.gamma == other.gamma
            and np.array_equal(self.P, other.P)
            and np.array_equal(self.reward, other.reward)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class TDGeometry:
    """Matrices and vectors every TD analysis needs, derived from one MRP."""

    P: np.ndarray
    gamma: float
    mu: np.ndarray
    D_mu: np.ndarray
    R: np.ndarray
    V_star: np.ndarray
    A: np.ndarray
    S_A: np.ndarray
    R_A: np.ndarray
    B: float

    @property
    def n(self) -> int:
        return self.P.shape[0]

    def with_matrix(self, A: np.ndarray) -> "TDGeometry":
        """Copy with ``A`` swapped out (used by harness sanity checks)."""
        A = np.asarray(A, dtype=float)
        return TDGeometry(
            P=self.P, gamma=self.gamma, mu=self.mu, D_mu=self.D_mu, R=self.R,
            V_star=self.V_star, A=A, S_A=0.5 * (A + A.T), R_A=0.5 * (A - A.T), B=self.B,
        )


def _period(adj: np.ndarray) -> int:
    n = adj.shape[0]
    level = np.full(n, -1)
    level[0] = 0
    queue = deque([0])
    g = 0
    while queue:
        u = queue.popleft()
        for v in np.flatnonzero(adj[u]):
            if level[v] < 0:
                level[v] = level[u] + 1
                queue.append(v)
            else:
                g = math.gcd(g, abs(int(level[u]) + 1 - int(level[v])))
    return g


def validate(P) -> ValidityCertificate:
    """Check that ``P`` is row-stochastic, irreducible and aperiodic.

    Irreducibility is a single strongly connected component of the digraph of
    positive entries. The period is the gcd, over all edges ``u -> v``, of
    ``level[u] + 1 - level[v]`` where ``level`` is the BFS depth from state 0.
    """
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] == 0:
        raise NotStochastic(f"P must be a non-empty square matrix, got shape {P.shape}")
    if not np.all(np.isfinite(P)):
        raise NotStochastic("P contains non-finite entries")
    if np.any(P < 0):
        i, j = np.argwhere(P < 0)[0]
        raise NotStochastic(f"negative transition probability P[{i},{j}] = {P[i, j]}")
    row_err = np.abs(P.sum(axis=1) - 1.0)
    if row_err.max() > ROW_SUM_TOL:
        i = int(row_err.argmax())
        raise NotStochastic(f"row {i} sums to {P[i].sum()!r}, not 1")
    adj = P > 0
    n_scc, _ = connected_components(adj.astype(int), directed=True, connection="strong")
    if n_scc != 1:
        raise Reducible(f"transition graph has {n_scc} strongly connected components")
    period = _period(adj)
    if period != 1:
        raise Periodic(f"chain has period {period}")
    return ValidityCertificate(n=P.shape[0], scc_count=1, period=1, max_row_sum_error=float(row_err.max()))


def stationary_distribution(mrp: MarkovRewardProcess) -> np.ndarray:
    """Solve ``mu^T P = mu^T`` with ``sum(mu) = 1`` by a direct linear solve."""
    n = mrp.n
    M = mrp.P.T - np.eye(n)
    M[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    if np.linalg.cond(M) > 1e12:
        raise SingularSolve("stationary system is numerically rank deficient")
    mu = np.linalg.solve(M, rhs)
    if np.any(mu <= 0):
        raise SingularSolve(f"stationary solve produced non-positive mass {mu.min()}")
    return mu / mu.sum()


def expected_reward(mrp: MarkovRewardProcess) -> np.ndarray:
    r = mrp.reward
    if r.ndim == 1:
        return r.copy()
    return np.einsum("ij,ij->i", mrp.P, r)


def true_value(mrp: MarkovRewardProcess) -> np.ndarray:
    return np.linalg.solve(np.eye(mrp.n) - mrp.gamma * mrp.P, expected_reward(mrp))


def mu_norm(geometry_or_mu, v) -> float:
    mu = geometry_or_mu.mu if isinstance(geometry_or_mu, TDGeometry) else np.asarray(geometry_or_mu)
    v = np.asarray(v, dtype=float)
    return float(np.sqrt(np.sum(mu * v * v)))


def td_matrix(mrp: MarkovRewardProcess) -> TDGeometry:
    mu = stationary_distribution(mrp)
    D = np.diag(mu)
    n = mrp.n
    A = D @ (np.eye(n) - mrp.gamma * mrp.P)
    S = 0.5 * (A + A.T)
    lam_min = np.linalg.eigvalsh(S)[0]
    if lam_min <= 0:
        raise PositivityViolation(f"lambda_min(S_A) = {lam_min} <= 0")
    R = expected_reward(mrp)
    V_star = true_value(mrp)
    B = mu_norm(mu, (np.eye(n) - mrp.gamma * mrp.P) @ V_star) / (1.0 - mrp.gamma)
    return TDGeometry(
        P=mrp.P, gamma=mrp.gamma, mu=mu, D_mu=D, R=R, V_star=V_star,
        A=A, S_A=S, R_A=0.5 * (A - A.T), B=B,
    )


def k_step_matrix(geometry: TDGeometry, k: int):
    """Return ``(A_k, S_k, R_k)`` with ``A_k = D_mu (I - (gamma P)^k)``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if k == 1:
        return geometry.A, geometry.S_A, geometry.R_A
    n = geometry.n
    Ak = geometry.D_mu @ (np.eye(n) - np.linalg.matrix_power(geometry.gamma * geometry.P, k))
    return Ak, 0.5 * (Ak + Ak.T), 0.5 * (Ak - Ak.T)


# --- builders -----------------------------------------------------------------


def cycle_mrp(n: int = 3, delta: float = 0.0, self_loop: float = 0.5, gamma: float = 0.9,
              reward=None) -> MarkovRewardProcess:
    """Cycle chain: self loop, forward mass ``1 - self_loop - delta``, backward ``delta``.

    With ``n=3, delta=0`` this is the three-state spiral chain; ``delta`` adds
    reverse connections.
    """
    if n < 3:
        raise InvalidProbability("cycle chain needs n >= 3")
    forward = 1.0 - self_loop - delta
    if min(self_loop, forward, delta) < 0 or delta > 0.5:
        raise InvalidProbability(
            f"self_loop={self_loop}, delta={delta} give forward mass {forward}")
    P = np.zeros((n, n))
    for i in range(n):
        P[i, i] += self_loop
        P[i, (i - 1) % n] += forward
        P[i, (i + 1) % n] += delta
    reward = np.zeros(n) if reward is None else reward
    return MarkovRewardProcess(P, reward, gamma)


def random_mrp(n: int, gamma: float = 0.9, seed: int = 0, reward_scale: float = 1.0) -> MarkovRewardProcess:
    """Strictly positive random chain (Dirichlet rows) with uniform rewards."""
    if n < 2:
        raise ValueError("n must be >= 2")
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.ones(n), size=n)
    P = np.maximum(P, 1e-3)
    P /= P.sum(axis=1, keepdims=True)
    R = rng.uniform(-reward_scale, reward_scale, size=n)
    return MarkovRewardProcess(P, R, gamma)


def reversible_mrp(n: int, gamma: float = 0.9, seed: int = 0) -> MarkovRewardProcess:
    """Random walk on a complete weighted graph; satisfies detailed balance."""
    rng = np.random.default_rng(seed)
    W = rng.uniform(0.1, 1.0, size=(n, n))
    W = W + W.T
    P = W / W.sum(axis=1, keepdims=True)
    return MarkovRewardProcess(P, rng.uniform(-1, 1, size=n), gamma)


# --- JSON ---------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(v) for v in x) + "]"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def mrp_to_json(mrp: MarkovRewardProcess) -> str:
    key = "vector" if mrp.reward.ndim == 1 else "matrix"
    rows = ",\n    ".join(_fmt(row) for row in mrp.P)
    return (
        "{\n"
        f'  "n": {mrp.n},\n'
        f'  "P": [\n    {rows}\n  ],\n'
        f'  "reward": {{"{key}": {_fmt(mrp.reward)}}},\n'
        f'  "gamma": {_fmt(mrp.gamma)}\n'
        "}\n"
    )


def _reject_constant(name):
    raise ValueError(f"non-finite literal {name} is not allowed")


def mrp_from_json(text: str) -> MarkovRewardProcess:
    try:
        data = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    except ValueError as exc:
        raise ParseError(str(exc)) from exc
    try:
        n = int(data["n"])
        P = np.array(data["P"], dtype=float)
        reward = data["reward"]
        if "vector" in reward:
            r = np.array(reward["vector"], dtype=float)
        else:
            r = np.array(reward["matrix"], dtype=float)
        gamma = float(data["gamma"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"missing or invalid field: {exc}") from exc
    if P.shape != (n, n):
        raise ShapeMismatch(f"P has shape {P.shape}, expected ({n}, {n})")
    return MarkovRewardProcess(P, r, gamma)


def load_mrp(path) -> MarkovRewardProcess:
    return mrp_from_json(Path(path).read_text())


def save_mrp(mrp: MarkovRewardProcess, path) -> None:
    Path(path).write_text(mrp_to_json(mrp))


def is_reversible(geometry: TDGeometry, tol: float = 1e-12) -> bool:
    return bool(np.linalg.norm(geometry.R_A, "fro") < tol)
