"""Reversibility coefficients, tangent-kernel conditioning and k-step bounds."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import cho_factor, solve_triangular

from .errors import SolveFailure
from .mrp import TDGeometry, k_step_matrix

INF = math.inf
REVERSIBLE_TOL = 1e-12
RANK_TOL = 1e-12


def reversibility_coefficient(S_A, R_A, A) -> float:
    """Minimum over V != 0 of ``(|S_A V|^2 + |A V|^2) / |R_A V|^2``.

    Computed as ``1 / lambda_max(M^{-1} R_A^T R_A)`` with
    ``M = S_A^T S_A + A^T A``, reduced to a symmetric eigenproblem through the
    Cholesky factor of ``M``. Returns ``math.inf`` for (numerically)
    symmetric ``A``.
    """
    S_A, R_A, A = (np.asarray(x, dtype=float) for x in (S_A, R_A, A))
    if np.linalg.norm(R_A, "fro") < REVERSIBLE_TOL:
        return INF
    M = S_A.T @ S_A + A.T @ A
    try:
        L, _ = cho_factor(M, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SolveFailure("S_A^T S_A + A^T A is not positive definite") from exc
    L = np.tril(L)
    N = R_A.T @ R_A
    X = solve_triangular(L, N, lower=True)
    X = solve_triangular(L, X.T, lower=True)
    lam_max = np.linalg.eigvalsh(0.5 * (X + X.T))[-1]
    if lam_max <= 0:
        return INF
    return float(1.0 / lam_max)


def reversibility_quotient(S_A, R_A, A, V) -> float:
    """The Rayleigh-type quotient being minimized, evaluated at ``V``."""
    V = np.asarray(V, dtype=float)
    den = np.sum((R_A @ V) ** 2)
    num = np.sum((S_A @ V) ** 2) + np.sum((A @ V) ** 2)
    return INF if den == 0 else float(num / den)


def effective_reversibility(A_k) -> float:
    """Reversibility coefficient of a k-step matrix ``A_k`` (or its split triple)."""
    if isinstance(A_k, tuple):
        A_k = A_k[0]
    A_k = np.asarray(A_k, dtype=float)
    return reversibility_coefficient(0.5 * (A_k + A_k.T), 0.5 * (A_k - A_k.T), A_k)


def lambda2(P) -> float:
    """Modulus of the second largest (in modulus) eigenvalue of ``P``."""
    mods = np.sort(np.abs(np.linalg.eigvals(np.asarray(P, dtype=float))))[::-1]
    return float(mods[1]) if mods.size > 1 else 0.0


def k_step_lower_bound(mu, gamma: float, k: int, lam2: float) -> float:
    mu = np.asarray(mu, dtype=float)
    base = gamma * lam2
    if base == 0:
        return INF
    return float(mu.min() * (1.0 - gamma ** k) / mu.max() * base ** (-k))


def gershgorin_smin_bound(mu, gamma: float, k: int) -> float:
    """Certified lower bound ``mu_min (1 - gamma^k)`` on ``lambda_min(S_k)``."""
    return float(np.min(mu) * (1.0 - gamma ** k))


def tangent_kernel_condition(J) -> float:
    """Condition number of ``J J^T``; ``inf`` when it is rank deficient."""
    J = np.atleast_2d(np.asarray(J, dtype=float))
    s = np.linalg.svd(J, compute_uv=False)
    if J.shape[0] > J.shape[1]:
        return INF
    lam = s ** 2
    if lam[0] == 0 or lam[-1] < RANK_TOL * lam[0]:
        return INF
    return float(lam[0] / lam[-1])


@dataclass
class ReversibilityReport:
    rho: float
    rho_k: dict
    lambda2: float
    lower_bound_k: dict
    is_reversible: bool

    def to_json(self) -> str:
        return json.dumps(_encode_inf(asdict(self)), indent=2, sort_keys=True)


@dataclass
class ConditionReport:
    holds: bool
    rho: float
    max_kappa: float
    margin: float
    kappas: list = field(default_factory=list)


def _encode_inf(obj):
    if isinstance(obj, dict):
        return {str(k): _encode_inf(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode_inf(v) for v in obj]
    if isinstance(obj, float) and math.isinf(obj):
        return "inf" if obj > 0 else "-inf"
    return obj


def decode_inf(obj):
    if isinstance(obj, dict):
        return {k: decode_inf(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [decode_inf(v) for v in obj]
    if obj in ("inf", "-inf"):
        return float(obj)
    return obj


def reversibility_report(geometry: TDGeometry, ks=range(1, 6)) -> ReversibilityReport:
    lam2 = lambda2(geometry.P)
    rho_k, bound_k = {}, {}
    for k in ks:
        rho_k[k] = effective_reversibility(k_step_matrix(geometry, k)[0])
        bound_k[k] = k_step_lower_bound(geometry.mu, geometry.gamma, k, lam2)
    rho = reversibility_coefficient(geometry.S_A, geometry.R_A, geometry.A)
    return ReversibilityReport(rho=rho, rho_k=rho_k, lambda2=lam2, lower_bound_k=bound_k,
                               is_reversible=math.isinf(rho))


def theorem3_condition(approx, geometry: TDGeometry, theta_samples, matrix=None) -> ConditionReport:
    """Compare the worst tangent-kernel conditioning over samples with ``rho``."""
    if len(theta_samples) == 0:
        raise ValueError("theta_samples must be nonempty")
    A = geometry.A if matrix is None else np.asarray(matrix)
    rho = effective_reversibility(A)
    kappas = [tangent_kernel_condition(approx.jacobian(np.asarray(th))) for th in theta_samples]
    kmax = max(kappas)
    margin = rho - kmax if not (math.isinf(rho) and math.isinf(kmax)) else -INF
    return ConditionReport(holds=kmax < rho, rho=rho, max_kappa=kmax, margin=margin, kappas=kappas)
