"""Executable checks of the convergence and divergence results.

Each ``verify_*`` function checks one fixture and returns a
:class:`VerificationReport`; the ``check_*`` functions run a claim over its
canonical fixture set and aggregate. ``run_full_suite`` runs every claim.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import approximators as ap
from .dynamics import (
    IntegratorConfig,
    Status,
    integrate,
    k_step_vector_field,
    td_vector_field,
)
from .errors import (
    ConstantEstimationFailed,
    NoComplexEigenvalue,
    NonFiniteState,
    NotHomogeneous,
    RankDeficient,
    StepFailure,
)
from .fixtures import build_approximator, build_mrp, feature_matrix
from .mrp import MarkovRewardProcess, TDGeometry, cycle_mrp, k_step_matrix, mu_norm, random_mrp, td_matrix
from .spectral import (
    _encode_inf,
    decode_inf,
    effective_reversibility,
    gershgorin_smin_bound,
    k_step_lower_bound,
    lambda2,
    tangent_kernel_condition,
)

CLAIMS = ("T1", "T2", "C1", "T3", "P1_divergence", "P2_kstep", "P_bihoelder", "L_homogeneous", "B_linear")
CLAIM_ALIASES = {"P1": "P1_divergence", "P2": "P2_kstep", "LE": "L_homogeneous", "BH": "P_bihoelder",
                 "BL": "B_linear"}

LIMINF_TOL = 1e-3
ZERO_BOUND_ABS_TOL = 1e-6

NETWORK_RUN = IntegratorConfig(t_max=200.0, field_rtol=1e-7, diagnostics={"mu_error", "theta_norm"},
                               max_steps=400_000)
NONSMOOTH_FLOOR = 0.5


def network_config(approx, base: IntegratorConfig = NETWORK_RUN) -> IntegratorConfig:
    """ReLU fields jump across kinks; forced acceptance at a stability floor
    stops the step controller from stalling on a sliding surface."""
    inner = getattr(approx, "inner", approx)
    if getattr(inner, "activation", None) == "relu" and base.stability_floor is None:
        return IntegratorConfig(**{**base.to_dict(), "stability_floor": NONSMOOTH_FLOOR})
    return base


@dataclass
class VerificationReport:
    claim_id: str
    passed: bool
    measured: dict
    config: dict
    tolerance: float
    status: str = ""
    notes: str = ""

    def __post_init__(self):
        if not self.status:
            self.status = "pass" if self.passed else "fail"

    @property
    def margin(self):
        return self.measured.get("margin", math.nan)

    def to_dict(self):
        return _jsonable(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        d = decode_inf(d)
        return cls(**d)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        obj = obj.item()
    if isinstance(obj, Status):
        return str(obj)
    if isinstance(obj, float):
        return _encode_inf(obj) if math.isinf(obj) else (None if math.isnan(obj) else obj)
    return obj


def _geom(mrp) -> TDGeometry:
    return mrp if isinstance(mrp, TDGeometry) else td_matrix(mrp)


def _tail(values, times, tail_fraction=0.5, min_samples=10):
    """Samples in the final ``tail_fraction`` of the time window, at least ``min_samples``."""
    values, times = np.asarray(values), np.asarray(times)
    cut = times[-1] - tail_fraction * (times[-1] - times[0])
    mask = times >= cut
    if mask.sum() < min_samples:
        mask = np.zeros_like(mask)
        mask[-min_samples:] = True
    return values[mask]


def _kink_free_direction(net, rng, tries=200):
    for _ in range(tries):
        th = rng.normal(size=net.param_dim)
        th /= np.linalg.norm(th)
        if not np.any(net.value(th)):
            continue
        if getattr(net, "activation", None) == "relu" and net.min_preactivation(th) < 1e-3:
            continue
        return th
    raise RuntimeError("could not draw a non-degenerate parameter direction")


def homogeneous_start(net, geometry, seed, target, candidates=8):
    """Seeded start with ``|V(theta0)|_mu = target``.

    The best-scaled of ``candidates`` random unit directions is rescaled using
    homogeneity, which avoids needlessly stiff starting points.
    """
    rng = np.random.default_rng(seed)
    dirs = [_kink_free_direction(net, rng) for _ in range(candidates)]
    th = max(dirs, key=lambda d: mu_norm(geometry, net.value(d)))
    return th * (target / mu_norm(geometry, net.value(th))) ** (1.0 / net.degree)


def _run(field_fn, theta0, cfg):
    try:
        return integrate(field_fn, theta0, cfg), None
    except (NonFiniteState, StepFailure) as exc:
        return None, f"{type(exc).__name__}: {exc}"


# --- homogeneous attraction and the bi-Holder refinement ------------------------------------


def verify_theorem1(network, mrp, config: IntegratorConfig | None = None, *, seed=0, tol=LIMINF_TOL,
                    start_factor=3.0, fixture=None) -> VerificationReport:
    """Homogeneous approximator: tail minimum of ``|V|_mu`` is at most ``B``.

    Also checks the contraction mechanism: ``d|theta|^2/dt < 0`` at every
    recorded sample with ``|V|_mu > 1.01 B``.
    """
    g = _geom(mrp)
    cfg = config or network_config(network)
    rng = np.random.default_rng([seed, 7])
    hom = ap.check_homogeneity(network, [_kink_free_direction(network, rng) for _ in range(5)])
    if not hom.passed:
        raise NotHomogeneous("network failed the homogeneity precondition", report=hom)
    B = g.B
    target = start_factor * B if B > 0 else 1.0
    theta0 = homogeneous_start(network, g, seed, target)
    if B == 0:
        cfg = IntegratorConfig(**{**cfg.to_dict(), "value_tol": ZERO_BOUND_ABS_TOL, "t_max": 1e12})
    traj, err = _run(td_vector_field(network, g), theta0, cfg)
    conf = {"fixture": fixture, "seed": seed, "integrator": cfg.to_dict(), "start_factor": start_factor}
    if traj is None:
        return VerificationReport("T1", False, {"error": err, "B": B}, conf, tol)
    nm = traj.quantity("norm_mu")
    dth = traj.quantity("dtheta_norm_sq")
    liminf = float(_tail(nm, traj.times).min())
    limsup = float(_tail(nm, traj.times).max())
    bound = B * (1 + tol) if B > 0 else ZERO_BOUND_ABS_TOL
    outside = nm > 1.01 * B
    mech_ok = bool(np.all(dth[outside] < 0)) if outside.any() else True
    measured = {
        "B": B, "liminf_norm_mu": liminf, "limsup_norm_mu": limsup, "limsup_within_B": limsup <= bound,
        "margin": bound - liminf, "mechanism_holds": mech_ok, "n_outside": int(outside.sum()),
        "max_dtheta_outside": float(dth[outside].max()) if outside.any() else None,
        "initial_norm_mu": float(nm[0]), "terminal_status": str(traj.terminal_status),
        "t_end": float(traj.times[-1]), "n_samples": len(traj), "degree": network.degree,
    }
    passed = liminf <= bound and mech_ok and traj.terminal_status != Status.DIVERGED
    return VerificationReport("T1", passed, measured, conf, tol)


def bihoelder_constants(approx, geometry, *, n_samples=10_000, shell=(0.1, 10.0), margin=0.1, seed=0):
    """Constants ``c, s, r, C`` with ``c |theta|^s <= |V(theta)|_mu <= C |theta|^r``.

    Linear approximators get exact constants from the singular values of
    ``D_mu^{1/2} Phi``. Homogeneous networks use ``s = r = degree`` and sample
    the ratio on a shell, widening min/max by ``margin``.
    """
    if isinstance(approx, (ap.Linear, ap.Tabular)):
        Phi = approx.Phi if isinstance(approx, ap.Linear) else np.eye(approx.state_dim)
        sv = np.linalg.svd(np.sqrt(geometry.mu)[:, None] * Phi, compute_uv=False)
        return {"c": float(sv[-1]), "s": 1.0, "r": 1.0, "C": float(sv[0]), "method": "singular_values"}
    D = approx.degree
    rng = np.random.default_rng([seed, 11])
    ratios = np.empty(n_samples)
    for i in range(n_samples):
        th = rng.normal(size=approx.param_dim)
        th *= rng.uniform(*shell) / np.linalg.norm(th)
        ratios[i] = mu_norm(geometry, approx.value(th)) / np.linalg.norm(th) ** D
    c, C = ratios.min() * (1 - margin), ratios.max() * (1 + margin)
    if c <= 0:
        raise ConstantEstimationFailed("shell sampling found |V(theta)| = 0; no positive lower constant")
    return {"c": float(c), "s": float(D), "r": float(D), "C": float(C), "method": "shell_sampling"}


def verify_bihoelder(network, mrp, config: IntegratorConfig | None = None, *, seed=0, tol=LIMINF_TOL,
                     constants=None, start_factor=3.0, fixture=None) -> VerificationReport:
    g = _geom(mrp)
    cfg = config or network_config(network)
    consts = constants or bihoelder_constants(network, g, seed=seed)
    B = g.B
    bound = consts["C"] * (B / consts["c"]) ** (consts["r"] / consts["s"])
    if isinstance(network, ap.Linear):
        theta0 = np.random.default_rng(seed).normal(size=network.param_dim)
        theta0 *= start_factor * max(B, 1.0) / mu_norm(g, network.value(theta0))
    else:
        theta0 = homogeneous_start(network, g, seed, start_factor * B if B > 0 else 1.0)
    if B == 0:
        cfg = IntegratorConfig(**{**cfg.to_dict(), "value_tol": ZERO_BOUND_ABS_TOL, "t_max": 1e12})
    traj, err = _run(td_vector_field(network, g), theta0, cfg)
    conf = {"fixture": fixture, "seed": seed, "integrator": cfg.to_dict(), "constants": consts}
    if traj is None:
        return VerificationReport("P_bihoelder", False, {"error": err}, conf, tol)
    limsup = float(_tail(traj.quantity("norm_mu"), traj.times).max())
    allowed = bound * (1 + tol) if bound > 0 else ZERO_BOUND_ABS_TOL
    measured = {"B": B, "bound": bound, "limsup_norm_mu": limsup, "margin": allowed - limsup,
                "terminal_status": str(traj.terminal_status), **{k: consts[k] for k in "csrC"}}
    return VerificationReport("P_bihoelder", limsup <= allowed, measured, conf, tol)


# --- residual-homogeneous networks ------------------------------------------------


def verify_theorem2_and_corollary(resnet, mrp, config: IntegratorConfig | None = None, *, seed=0,
                                  tol=LIMINF_TOL, start_scale=2.0, fixture=None) -> VerificationReport:
    """Residual-homogeneous approximator against the projected baseline.

    ``Pi_Phi`` is the mu-weighted orthogonal projection onto ``span(Phi)``.
    """
    g = _geom(mrp)
    if not isinstance(resnet, ap.ResidualHomogeneousNetwork):
        raise TypeError("expected a ResidualHomogeneousNetwork")
    Phi = resnet.Phi
    if np.linalg.matrix_rank(Phi) < Phi.shape[1]:
        raise RankDeficient("Phi must have full column rank")
    cfg = config or network_config(resnet)
    Pi = ap.mu_projection(Phi, g.mu)
    base = Pi @ g.V_star
    resid = g.V_star - base
    gamma = g.gamma
    I = np.eye(g.n)
    B_phi = mu_norm(g, (I - gamma * g.P) @ resid) / (1 - gamma)
    proj_err = mu_norm(g, resid)
    cor_bound = (1 + (1 + gamma) / (1 - gamma)) * proj_err

    rng = np.random.default_rng([seed, 3])
    t1 = rng.normal(size=resnet.linear_dim)
    t2 = homogeneous_start(resnet.inner, g, seed, start_scale * max(mu_norm(g, g.V_star), 1e-3))
    theta0 = np.concatenate([t1, t2])
    if B_phi == 0:
        cfg = IntegratorConfig(**{**cfg.to_dict(), "value_tol": ZERO_BOUND_ABS_TOL, "t_max": 1e12})
    traj, err = _run(td_vector_field(resnet, g), theta0, cfg)
    conf = {"fixture": fixture, "seed": seed, "integrator": cfg.to_dict(),
            "projection": "mu-weighted orthogonal projection onto span(Phi)"}
    if traj is None:
        return VerificationReport("T2", False, {"error": err}, conf, tol)
    V = traj.values
    d_base = np.sqrt(((V - base) ** 2) @ g.mu)
    d_star = np.sqrt(((V - g.V_star) ** 2) @ g.mu)
    liminf_base = float(_tail(d_base, traj.times).min())
    liminf_star = float(_tail(d_star, traj.times).min())
    allow_base = B_phi * (1 + tol) if B_phi > 0 else ZERO_BOUND_ABS_TOL
    allow_star = cor_bound * (1 + tol) if cor_bound > 0 else ZERO_BOUND_ABS_TOL
    measured = {
        "B_phi": B_phi, "projection_error": proj_err, "corollary_bound": cor_bound,
        "liminf_dist_projection": liminf_base, "liminf_dist_vstar": liminf_star,
        "limsup_dist_projection": float(_tail(d_base, traj.times).max()),
        "theorem_margin": allow_base - liminf_base, "corollary_margin": allow_star - liminf_star,
        "theorem_holds": liminf_base <= allow_base, "corollary_holds": liminf_star <= allow_star,
        "terminal_status": str(traj.terminal_status),
    }
    measured["margin"] = min(measured["theorem_margin"], measured["corollary_margin"])
    passed = measured["theorem_holds"] and measured["corollary_holds"]
    return VerificationReport("T2", passed, measured, conf, tol)


# --- well-conditioned approximators ------------------------------------------------------------------


def calibrate_perturbation(geometry, *, seed=0, n_samples=100, margin=0.1, scale=3.0, iters=60):
    """Largest ``beta`` (bisection) whose global conditioning bound is at most ``rho / (1 + margin)``.

    The bound ``((1 + beta) / (1 - beta))^2`` holds at every theta, so the
    condition cannot fail along a trajectory; sampled conditioning is reported
    alongside it.
    """
    rho = effective_reversibility(geometry.A)
    rng = np.random.default_rng([seed, 5])
    n = geometry.n
    M = rng.normal(size=(n, n))
    radius = scale * (1.0 + np.max(np.abs(geometry.V_star)))
    samples = rng.normal(scale=radius, size=(n_samples, n))
    target = rho / (1 + margin)
    lo, hi = 0.0, 0.99
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ap.PerturbedTabular(M, mid).kappa_bound() <= target else (lo, mid)
    f = ap.PerturbedTabular(M, lo)
    sampled = max(tangent_kernel_condition(f.jacobian(s)) for s in samples)
    return f, {"beta": lo, "rho": rho, "kappa_bound": f.kappa_bound(), "max_sampled_kappa": sampled,
               "target": target, "n_samples": n_samples}


def verify_theorem3(approx, mrp, config: IntegratorConfig | None = None, *, seed=0, lyapunov_atol=1e-10,
                    error_tol=1e-6, theta0=None, fixture=None) -> VerificationReport:
    g = _geom(mrp)
    cfg = config or IntegratorConfig(t_max=5000.0, value_tol=error_tol / 10, max_steps=400_000)
    rho = effective_reversibility(g.A)
    if theta0 is None:
        theta0 = np.random.default_rng([seed, 9]).normal(size=approx.param_dim) * (
            1.0 + np.max(np.abs(g.V_star)))
    conf = {"fixture": fixture, "seed": seed, "integrator": cfg.to_dict(), "lyapunov_atol": lyapunov_atol}
    traj, err = _run(td_vector_field(approx, g), theta0, cfg)
    if traj is None:
        return VerificationReport("T3", False, {"error": err, "rho": rho}, conf, error_tol)
    kap = traj.quantity("kappa")
    L = traj.quantity("lyapunov")
    bad = np.flatnonzero(~(kap < rho))
    dL = np.diff(L)
    lyap_ok = bool(np.all(dL < lyapunov_atol))
    terminal = float(traj.quantity("mu_error")[-1])
    measured = {
        "rho": rho, "max_kappa": float(kap.max()), "margin": rho - float(kap.max()),
        "condition_holds": bad.size == 0, "condition_violated": bad.size > 0,
        "first_violation_theta": traj.thetas[bad[0]].tolist() if bad.size else None,
        "lyapunov_monotone": lyap_ok, "max_lyapunov_increment": float(dL.max()) if dL.size else 0.0,
        "terminal_mu_error": terminal, "terminal_status": str(traj.terminal_status), "n_samples": len(traj),
    }
    passed = bad.size == 0 and lyap_ok and terminal < error_tol
    notes = "ConditionViolated: kappa >= rho at a recorded theta" if bad.size else ""
    return VerificationReport("T3", passed, measured, conf, error_tol, notes=notes)


# --- divergent construction ------------------------------------------------------


def divergence_premise(approx, A, n_samples=1000, seed=0):
    """Worst slack of ``V^T Q^T A V <= -(a^2+b^2)|V|^2/C`` over random V in E."""
    rng = np.random.default_rng([seed, 13])
    k = approx.a ** 2 + approx.b ** 2
    worst = -math.inf
    for _ in range(n_samples):
        V = approx.U @ rng.normal(size=2)
        worst = max(worst, float(V @ approx.Q.T @ A @ V + k * (V @ V) / approx.C))
    return worst


DIVERGENCE_RUN = IntegratorConfig(t_max=1e8, rtol=2e-6, atol=1e-9, diagnostics={"mu_error"}, record_every=2,
                                  divergence_threshold=2e3, max_steps=400_000)


def _zero_reward(g: TDGeometry) -> TDGeometry:
    A = g.A
    z = td_matrix(MarkovRewardProcess(g.P, np.zeros(g.n), g.gamma))
    return z if np.array_equal(A, z.A) else z.with_matrix(A)


def verify_divergence(mrp, config: IntegratorConfig | None = None, *, epsilon_fraction=0.5,
                      fixture=None) -> VerificationReport:
    """Construct the spiral approximator for ``P`` and check it diverges.

    The construction targets ``V* = 0``, so rewards are dropped: the run uses
    the same transition matrix and discount with zero reward.
    """
    g = _geom(mrp)
    if np.any(g.R != 0):
        g = _zero_reward(g)
    cfg = config or DIVERGENCE_RUN
    conf = {"fixture": fixture, "integrator": cfg.to_dict(), "epsilon_fraction": epsilon_fraction}
    try:
        base = ap.construct_divergent(g, epsilon_fraction)
    except NoComplexEigenvalue as exc:
        return VerificationReport("P1_divergence", True, {"eigenvalues": exc.eigenvalues.tolist()}, conf, 0.0,
                                  status="not_applicable", notes="A has a real spectrum; hypothesis fails")
    ext = ap.construct_divergent(g, epsilon_fraction, extension_rank=g.n - 2)
    premise = divergence_premise(base, g.A)
    measured = {"a": base.a, "b": base.b, "C": base.C, "epsilon": base.epsilon,
                "premise_worst_slack": premise, "premise_holds": premise <= 1e-9}
    passed = measured["premise_holds"]
    for label, approx in (("base", base), ("extended", ext)):
        traj, err = _run(td_vector_field(approx, g), np.zeros(approx.param_dim), cfg)
        if traj is None:
            measured[f"{label}_error"] = err
            passed = False
            continue
        thdot, ranks, orth = [], [], 0.0
        AW = g.A @ approx.W
        for th in traj.thetas:
            V, J = approx.value_and_jacobian(th)
            thdot.append(-J[:, 0] @ (g.A @ (V - g.V_star)))
            ranks.append(np.linalg.matrix_rank(J))
            if approx.extension_rank:
                orth = max(orth, float(np.max(np.abs(J[:, 0] @ AW))))
        thdot = np.array(thdot)
        norms = np.linalg.norm(traj.values, axis=1)
        m = {
            "min_theta_dot": float(thdot.min()), "theta_dot_positive": bool(np.all(thdot > 0)),
            "terminal_status": str(traj.terminal_status), "growth_ratio": float(norms[-1] / norms[0]),
            "min_jacobian_rank": int(min(ranks)), "max_cross_term": orth, "t_end": float(traj.times[-1]),
        }
        ok = m["theta_dot_positive"] and traj.terminal_status == Status.DIVERGED and m["growth_ratio"] > 1e3
        if label == "extended":
            ok = ok and m["min_jacobian_rank"] == g.n - 1
        measured.update({f"{label}_{k}": v for k, v in m.items()})
        passed = passed and ok
    measured["margin"] = min(measured.get("base_growth_ratio", 0), measured.get("extended_growth_ratio", 0)) - 1e3
    return VerificationReport("P1_divergence", passed, measured, conf, 1e3)


# --- k-step returns -------------------------------------------------


def verify_kstep_proposition(mrp, k_range=range(1, 11), *, tol=1e-9, fixture=None) -> VerificationReport:
    g = _geom(mrp)
    ks = list(k_range)
    if not ks:
        raise ValueError("k_range must be nonempty")
    lam2 = lambda2(g.P)
    rows, ok, margin = [], True, math.inf
    for k in ks:
        A_k, S_k, _ = k_step_matrix(g, k)
        rho_k = effective_reversibility(A_k)
        lb = k_step_lower_bound(g.mu, g.gamma, k, lam2)
        smin = float(np.linalg.eigvalsh(S_k)[0])
        gb = gershgorin_smin_bound(g.mu, g.gamma, k)
        holds_rho = math.sqrt(rho_k) >= lb - tol
        holds_s = smin >= gb - tol
        ok = ok and holds_rho and holds_s
        m = (math.sqrt(rho_k) - lb) if not math.isinf(rho_k) else math.inf
        margin = min(margin, m, smin - gb)
        rows.append({"k": k, "sqrt_rho_k": math.sqrt(rho_k), "lower_bound": lb, "lambda_min_S_k": smin,
                     "gershgorin_bound": gb})
    return VerificationReport("P2_kstep", ok, {"lambda2": lam2, "per_k": rows, "margin": margin},
                              {"fixture": fixture, "k_range": ks}, tol)


# --- per-layer homogeneity of networks ----------------------------------------------------


def finite_difference_jacobian(approx, theta, h=1e-6):
    theta = np.asarray(theta, dtype=float)
    J = np.empty((approx.state_dim, approx.param_dim))
    for j in range(approx.param_dim):
        e = np.zeros_like(theta)
        e[j] = h
        J[:, j] = (approx.value(theta + e) - approx.value(theta - e)) / (2 * h)
    return J


def jacobian_fd_error(approx, theta, h=1e-6) -> float:
    J = approx.jacobian(theta)
    return float(np.max(np.abs(finite_difference_jacobian(approx, theta, h) - J)) / max(np.max(np.abs(J)), 1e-300))


def verify_homogeneous_lemma(network, *, n_samples=20, seed=0, tol=1e-8, fd_tol=1e-5,
                             fixture=None) -> VerificationReport:
    rng = np.random.default_rng([seed, 17])
    worst, worst_fd = 0.0, 0.0
    for _ in range(n_samples):
        th = _kink_free_direction(network, rng) * rng.uniform(0.5, 2.0)
        f = network.value(th)
        fn = np.linalg.norm(f)
        for contraction, factor in zip(network.layer_euler(th), network.layer_degrees):
            worst = max(worst, float(np.linalg.norm(contraction - factor * f) / fn))
        worst_fd = max(worst_fd, jacobian_fd_error(network, th))
    measured = {"max_layer_identity_error": worst, "max_fd_error": worst_fd,
                "layer_factors": list(network.layer_degrees), "margin": tol - worst}
    return VerificationReport("L_homogeneous", worst < tol and worst_fd < fd_tol, measured,
                              {"fixture": fixture, "seed": seed, "n_samples": n_samples}, tol)


# --- linear TD baseline -------------------------------------------------------------


LINEAR_RUN = IntegratorConfig(t_max=1e6, rtol=1e-9, atol=1e-12, diagnostics={"mu_error"}, field_tol=1e-10)


def verify_linear(Phi, mrp, config: IntegratorConfig | None = None, *, tol=1e-6, fixture=None):
    g = _geom(mrp)
    lin = ap.linear(Phi)
    if config is None:
        M = lin.Phi.T @ g.A @ lin.Phi
        rate = float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])
        cfg = IntegratorConfig(**{**LINEAR_RUN.to_dict(), "t_max": 60.0 / rate}) if rate > 0 else LINEAR_RUN
    else:
        cfg = config
    theta_star, bound = ap.linear_fixed_point(Phi, g)
    traj, err = _run(td_vector_field(lin, g), np.zeros(lin.param_dim), cfg)
    conf = {"fixture": fixture, "integrator": cfg.to_dict()}
    if traj is None:
        return VerificationReport("B_linear", False, {"error": err}, conf, tol)
    dist = float(np.linalg.norm(traj.thetas[-1] - theta_star))
    err_star = mu_norm(g, lin.Phi @ theta_star - g.V_star)
    measured = {"theta_distance": dist, "fixed_point_error": err_star, "bound": bound,
                "bound_holds": err_star <= bound + 1e-9, "terminal_status": str(traj.terminal_status),
                "margin": tol - dist}
    return VerificationReport("B_linear", dist < tol and measured["bound_holds"], measured, conf, tol)


# --- aggregation and canonical fixture sets -----------------------------------------


def combine(claim_id, reports, params, check, tolerance=None) -> VerificationReport:
    applicable = [r for r in reports if r.status != "not_applicable"]
    failed = [r for r in applicable if not r.passed]
    margins = [r.margin for r in applicable if isinstance(r.margin, (int, float)) and not math.isnan(r.margin)]
    measured = {
        "n_fixtures": len(reports), "n_applicable": len(applicable), "n_failed": len(failed),
        "margin": min(margins) if margins else math.nan,
        "fixtures": [{"config": r.config.get("fixture"), "passed": r.passed, "status": r.status,
                      "measured": r.measured} for r in reports],
    }
    tol = tolerance if tolerance is not None else (reports[0].tolerance if reports else 0.0)
    passed = not failed and bool(applicable)
    status = "pass" if passed else ("not_applicable" if not applicable and reports else "fail")
    if status == "not_applicable":
        passed = True
    return VerificationReport(claim_id, passed, measured, {"check": check, "params": params}, tol, status=status)


def _apply_corruption(g, corrupt):
    if corrupt is None:
        return g
    if corrupt == "negate_A":
        return g.with_matrix(-g.A)
    raise ValueError(f"unknown corruption {corrupt!r}")


def _seed_list(seed, count, salt):
    return [int(s) for s in np.random.default_rng([seed, salt]).integers(0, 2**31 - 1, size=count)]


def check_T1(seed=0, n_mrps=10, n_seeds=5, activation="square", n_states=4, corrupt=None) -> VerificationReport:
    reports = []
    for ms in _seed_list(seed, n_mrps, 101):
        mdesc = {"builder": "random", "n": n_states, "gamma": 0.9, "seed": ms}
        g = _apply_corruption(td_matrix(build_mrp(mdesc)), corrupt)
        for s in range(n_seeds):
            adesc = {"kind": "homogeneous", "activation": activation, "layer_dims": [4, 1], "seed": s,
                     "features": {"rank": 3, "seed": ms}}
            net = build_approximator(adesc, g)
            reports.append(verify_theorem1(net, g, seed=s, fixture={"mrp": mdesc, "approx": adesc,
                                                                     "corrupt": corrupt}))
    return combine("T1", reports, {"seed": seed, "n_mrps": n_mrps, "n_seeds": n_seeds,
                                   "activation": activation, "n_states": n_states, "corrupt": corrupt}, "T1")


def check_bihoelder(seed=0, n_seeds=5, n_states=4, corrupt=None) -> VerificationReport:
    reports = []
    for s in range(n_seeds):
        mdesc = {"builder": "random", "n": n_states, "gamma": 0.9, "seed": _seed_list(seed, n_seeds, 103)[s]}
        g = _apply_corruption(td_matrix(build_mrp(mdesc)), corrupt)
        adesc = {"kind": "homogeneous", "activation": "square", "layer_dims": [1], "seed": s,
                 "features": {"rank": 2, "seed": s}}
        net = build_approximator(adesc, g)
        reports.append(verify_bihoelder(net, g, seed=s, fixture={"mrp": mdesc, "approx": adesc}))
        ldesc = {"kind": "linear", "features": {"rank": 2, "seed": s}}
        reports.append(verify_bihoelder(build_approximator(ldesc, g), g, seed=s,
                                        fixture={"mrp": mdesc, "approx": ldesc}))
    return combine("P_bihoelder", reports, {"seed": seed, "n_seeds": n_seeds, "n_states": n_states,
                                            "corrupt": corrupt}, "P_bihoelder")


def check_T2_C1(seed=0, n_seeds=5, corrupt=None):
    """Residual-homogeneous fixtures: rank-1 and rank-2 features on 3-5 state chains."""
    reports = []
    fixtures = [({"builder": "cycle", "n": 3, "delta": 0.0, "gamma": 0.9, "reward": [1.0, 0.0, -0.5]}, "ones")]
    for n in (3, 4, 5):
        for rank in (1, 2):
            fixtures.append(({"builder": "random", "n": n, "gamma": 0.9,
                              "seed": _seed_list(seed, 1, 200 + 10 * n + rank)[0]},
                             {"rank": rank, "seed": 10 * n + rank}))
    for mdesc, feats in fixtures:
        g = _apply_corruption(td_matrix(build_mrp(mdesc)), corrupt)
        for s in range(n_seeds):
            adesc = {"kind": "residual", "features": feats, "seed": s,
                     "inner": {"layer_dims": [4, 1], "activation": "relu", "features": {"rank": 3, "seed": s}}}
            net = build_approximator(adesc, g)
            reports.append(verify_theorem2_and_corollary(net, g, seed=s, fixture={"mrp": mdesc, "approx": adesc}))
    params = {"seed": seed, "n_seeds": n_seeds, "corrupt": corrupt}
    t2 = combine("T2", reports, params, "T2")
    c1_reports = []
    for r in reports:
        ok = bool(r.measured.get("corollary_holds", False))
        m = {**r.measured, "margin": r.measured.get("corollary_margin", -math.inf)}
        c1_reports.append(VerificationReport("C1", ok, m, r.config, r.tolerance))
    c1 = combine("C1", c1_reports, params, "C1")
    return t2, c1


def check_T3(seed=0, gamma=0.9, corrupt=None) -> VerificationReport:
    reports = []
    for reward in ([0.0, 0.0, 0.0], [1.0, 0.0, -1.0]):
        mdesc = {"builder": "cycle", "n": 3, "delta": 0.0, "gamma": gamma, "reward": reward}
        g = _apply_corruption(td_matrix(build_mrp(mdesc)), corrupt)
        approx, calib = calibrate_perturbation(td_matrix(build_mrp(mdesc)), seed=seed)
        rep = verify_theorem3(approx, g, seed=seed, fixture={"mrp": mdesc, "approx": approx.to_spec(),
                                                            "calibration": calib, "corrupt": corrupt})
        rep.measured["calibration"] = calib
        reports.append(rep)
    return combine("T3", reports, {"seed": seed, "gamma": gamma, "corrupt": corrupt}, "T3")


def check_P1(seed=0, n_random=10, n_states=5, max_tries=200, corrupt=None) -> VerificationReport:
    reports = []
    mdesc = {"builder": "cycle", "n": 3, "delta": 0.0, "gamma": 0.9}
    reports.append(verify_divergence(_apply_corruption(td_matrix(build_mrp(mdesc)), corrupt),
                                     fixture={"mrp": mdesc}))
    applicable = 0
    for s in _seed_list(seed, max_tries, 301):
        if applicable >= n_random:
            break
        mdesc = {"builder": "random", "n": n_states, "gamma": 0.9, "seed": s}
        rep = verify_divergence(_apply_corruption(td_matrix(build_mrp(mdesc)), corrupt), fixture={"mrp": mdesc})
        applicable += rep.status != "not_applicable"
        reports.append(rep)
    out = combine("P1_divergence", reports, {"seed": seed, "n_random": n_random, "n_states": n_states,
                                             "max_tries": max_tries, "corrupt": corrupt}, "P1")
    out.measured["n_not_applicable"] = sum(r.status == "not_applicable" for r in reports)
    if applicable < n_random:
        out.passed, out.status = False, "fail"
        out.notes = f"only {applicable} chains with complex eigenpairs found"
    return out


def check_P2(seed=0, n_mrps=100, k_max=10, corrupt=None) -> VerificationReport:
    rng = np.random.default_rng([seed, 401])
    reports = []
    for _ in range(n_mrps):
        mdesc = {"builder": "random", "n": int(rng.integers(2, 9)), "gamma": float(rng.choice([0.5, 0.9, 0.99])),
                 "seed": int(rng.integers(0, 2**31 - 1))}
        g = _apply_corruption(td_matrix(build_mrp(mdesc)), corrupt)
        reports.append(verify_kstep_proposition(g, range(1, k_max + 1), fixture={"mrp": mdesc}))
    return combine("P2_kstep", reports, {"seed": seed, "n_mrps": n_mrps, "k_max": k_max, "corrupt": corrupt},
                   "P2")


def check_LE(seed=0, n_seeds=20, depths=(1, 2, 3), activations=("relu", "square"), n_states=4):
    reports = []
    for act in activations:
        for depth in depths:
            for s in range(n_seeds):
                adesc = {"kind": "homogeneous", "activation": act, "layer_dims": [3] * (depth - 1) + [1],
                         "seed": seed * 1000 + s, "features": {"rank": 3, "seed": seed * 1000 + s}, "n": n_states}
                net = build_approximator(adesc)
                reports.append(verify_homogeneous_lemma(net, seed=s, fixture={"approx": adesc}))
    return combine("L_homogeneous", reports, {"seed": seed, "n_seeds": n_seeds, "depths": list(depths),
                                              "activations": list(activations), "n_states": n_states}, "LE")


def check_B_linear(seed=0, n_fixtures=10, corrupt=None) -> VerificationReport:
    rng = np.random.default_rng([seed, 501])
    reports = []
    for i in range(n_fixtures):
        n = int(rng.integers(3, 7))
        mdesc = {"builder": "random", "n": n, "gamma": float(rng.choice([0.5, 0.9])),
                 "seed": int(rng.integers(0, 2**31 - 1))}
        feats = {"rank": int(rng.integers(1, n)), "seed": int(rng.integers(0, 2**31 - 1))}
        g = _apply_corruption(td_matrix(build_mrp(mdesc)), corrupt)
        Phi = feature_matrix(n, feats)
        reports.append(verify_linear(Phi, g, fixture={"mrp": mdesc, "features": feats}))
    return combine("B_linear", reports, {"seed": seed, "n_fixtures": n_fixtures, "corrupt": corrupt}, "BL")


CHECKS = {
    "T1": check_T1,
    "P_bihoelder": check_bihoelder,
    "T2": lambda **kw: check_T2_C1(**kw)[0],
    "C1": lambda **kw: check_T2_C1(**kw)[1],
    "T3": check_T3,
    "P1": check_P1,
    "P2": check_P2,
    "LE": check_LE,
    "BL": check_B_linear,
}


def rerun(report: VerificationReport) -> VerificationReport:
    """Re-run an aggregated report from its embedded config."""
    conf = report.config
    return CHECKS[conf["check"]](**conf["params"])


@dataclass
class SuiteConfig:
    seed: int = 0
    claims: tuple = CLAIMS
    corrupt: str | None = None
    relu_t1: bool = True

    @classmethod
    def from_dict(cls, d: dict | None):
        d = dict(d or {})
        if "claims" in d:
            d["claims"] = tuple(normalize_claim(c) for c in d["claims"])
        return cls(**d)


def normalize_claim(c: str) -> str:
    c = CLAIM_ALIASES.get(c, c)
    if c not in CLAIMS:
        raise ValueError(f"unknown claim id {c!r}")
    return c


def run_full_suite(config=None, progress=None) -> list:
    """Run every requested claim on its canonical fixtures; never aborts on a failed claim."""
    cfg = config if isinstance(config, SuiteConfig) else SuiteConfig.from_dict(config)
    seed, corrupt = cfg.seed, cfg.corrupt
    out = []

    def emit(rep):
        out.append(rep)
        if progress:
            progress(rep)

    for claim in cfg.claims:
        t0 = time.time()
        if claim == "T1":
            rep = check_T1(seed, corrupt=corrupt)
            if cfg.relu_t1:
                relu = check_T1(seed, activation="relu", corrupt=corrupt)
                rep.measured["relu"] = {"passed": relu.passed, "n_failed": relu.measured["n_failed"],
                                        "margin": relu.measured["margin"]}
                rep.passed = rep.passed and relu.passed
                rep.status = "pass" if rep.passed else "fail"
        elif claim in ("T2", "C1"):
            if any(r.claim_id in ("T2", "C1") for r in out):
                continue
            t2, c1 = check_T2_C1(seed, corrupt=corrupt)
            for r in (t2, c1):
                if r.claim_id in cfg.claims:
                    r.measured["runtime_s"] = time.time() - t0
                    emit(r)
            continue
        elif claim == "P_bihoelder":
            rep = check_bihoelder(seed, corrupt=corrupt)
        elif claim == "T3":
            rep = check_T3(seed, corrupt=corrupt)
        elif claim == "P1_divergence":
            rep = check_P1(seed, corrupt=corrupt)
        elif claim == "P2_kstep":
            rep = check_P2(seed, corrupt=corrupt)
        elif claim == "L_homogeneous":
            rep = check_LE(seed)
        elif claim == "B_linear":
            rep = check_B_linear(seed, corrupt=corrupt)
        rep.measured["runtime_s"] = time.time() - t0
        emit(rep)
    return out


def write_reports(reports, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for r in reports:
        (out / f"{r.claim_id}.json").write_text(r.to_json())
    summary = out / "summary.csv"
    with open(summary, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["claim_id", "passed", "status", "margin"])
        for r in reports:
            m = r.margin
            w.writerow([r.claim_id, r.passed, r.status, "inf" if isinstance(m, float) and math.isinf(m) else m])
    return summary
