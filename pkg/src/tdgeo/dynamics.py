"""Expected TD ODEs and a small explicit Runge-Kutta integrator for them."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable

import numpy as np

from .approximators import Approximator
from .errors import DivergedBeyondRange, NonFiniteState, StepFailure, TooFewSamples
from .mrp import TDGeometry, k_step_matrix
from .spectral import tangent_kernel_condition

ALL_DIAGNOSTICS = frozenset({"mu_error", "lyapunov", "theta_norm", "kappa"})


class Status(str, Enum):
    CONVERGED = "Converged"
    HORIZON = "HorizonReached"
    DIVERGED = "Diverged"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class TDField:
    """``theta -> -J(theta)^T M (V(theta) - V*)`` for ``M = A`` or a k-step ``A_k``."""

    approx: Approximator
    geometry: TDGeometry
    matrix: np.ndarray
    k: int = 1

    def __call__(self, theta):
        V, J = self.approx.value_and_jacobian(theta)
        return -J.T @ (self.matrix @ (V - self.geometry.V_star))

    @property
    def lyapunov_matrix(self):
        return 0.5 * (self.matrix + self.matrix.T)

    def stiffness(self, theta) -> float:
        """Gauss-Newton estimate ``|J|_2^2 |M|_2`` of the field's largest rate."""
        J = self.approx.jacobian(theta)
        return float(np.linalg.norm(J, 2) ** 2 * np.linalg.norm(self.matrix, 2))


def td_vector_field(approx: Approximator, geometry: TDGeometry) -> TDField:
    return TDField(approx, geometry, geometry.A, 1)


def k_step_vector_field(approx: Approximator, geometry: TDGeometry, k: int) -> TDField:
    return TDField(approx, geometry, k_step_matrix(geometry, k)[0], k)


def tabular_rhs(geometry: TDGeometry) -> Callable:
    """Right-hand side of the tabular ODE ``dV/dt = D_mu (R + gamma P V - V)``."""
    D, P, R, g = geometry.D_mu, geometry.P, geometry.R, geometry.gamma
    return lambda V: D @ (R + g * (P @ V) - V)


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk45"
    dt: float = 1e-2
    rtol: float = 1e-8
    atol: float = 1e-10
    t_max: float = 100.0
    record_every: int = 1
    divergence_threshold: float = 1e6
    diagnostics: frozenset = ALL_DIAGNOSTICS
    field_tol: float = 1e-12
    value_tol: float | None = None
    field_rtol: float | None = None
    max_steps: int = 2_000_000
    h_max: float = math.inf
    stability_floor: float | None = None

    def __post_init__(self):
        if self.method not in ("rk4", "rk45"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.dt <= 0 or self.rtol <= 0 or self.atol <= 0 or self.t_max <= 0:
            raise ValueError("dt, rtol, atol and t_max must be positive")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        object.__setattr__(self, "diagnostics", frozenset(self.diagnostics))

    def to_dict(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["diagnostics"] = sorted(self.diagnostics)
        return d


@dataclass
class Trajectory:
    times: np.ndarray
    thetas: np.ndarray
    values: np.ndarray
    diagnostics: dict
    terminal_status: Status
    config: IntegratorConfig = field(default=None, repr=False)
    n_forced: int = 0

    def __len__(self):
        return len(self.times)

    def quantity(self, name):
        return np.asarray(self.diagnostics[name])

    def to_csv(self, path, extra_columns=None) -> None:
        d, n = self.thetas.shape[1], self.values.shape[1]
        header = (["t"] + [f"theta_{i}" for i in range(d)] + [f"v_{i}" for i in range(n)]
                  + ["norm_mu", "norm_mu_err", "lyapunov", "theta_norm_sq", "kappa", "status"])
        extra = extra_columns or {}
        header += list(extra)
        last = len(self.times) - 1

        def cell(name, i):
            arr = self.diagnostics.get(name)
            if arr is None:
                return ""
            x = float(arr[i])
            return "inf" if math.isinf(x) else repr(x)

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for i, t in enumerate(self.times):
                row = [repr(float(t))] + [repr(float(x)) for x in self.thetas[i]]
                row += [repr(float(x)) for x in self.values[i]]
                row += [cell(c, i) for c in ("norm_mu", "mu_error", "lyapunov", "theta_norm_sq", "kappa")]
                row.append(str(self.terminal_status) if i == last else "running")
                row += [repr(float(extra[c][i])) for c in extra]
                w.writerow(row)


def read_trajectory_csv(path):
    """Load a trajectory CSV into ``(header, columns)`` with float columns."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = {}
    for j, name in enumerate(header):
        if name == "status":
            cols[name] = [r[j] for r in body]
        else:
            cols[name] = np.array([float(r[j]) if r[j] != "" else math.nan for r in body])
    return header, cols


def diagnostics_at(approx: Approximator, geometry: TDGeometry, theta, matrix=None,
                   include=ALL_DIAGNOSTICS) -> dict:
    """Scalar diagnostics at ``theta``; ``matrix`` overrides ``A`` (k-step runs).

    ``norm_mu``, ``mu_error`` and ``field_norm`` are always present; ``include``
    selects ``lyapunov``, ``theta_norm`` (with ``dtheta_norm_sq``) and ``kappa``.
    """
    return _measure_td(approx, geometry, theta, matrix, include)[1]


def _measure_td(approx, geometry, theta, matrix, include):
    M = geometry.A if matrix is None else matrix
    theta = np.asarray(theta, dtype=float)
    V, J = approx.value_and_jacobian(theta)
    err = V - geometry.V_star
    mu = geometry.mu
    theta_dot = -J.T @ (M @ err)
    out = {
        "mu_error": float(np.sqrt(mu @ (err * err))),
        "norm_mu": float(np.sqrt(mu @ (V * V))),
        "field_norm": float(np.linalg.norm(theta_dot)),
    }
    if "lyapunov" in include:
        out["lyapunov"] = float(err @ (0.5 * (M + M.T)) @ err)
    if "theta_norm" in include:
        out["theta_norm_sq"] = float(theta @ theta)
        out["dtheta_norm_sq"] = float(2.0 * theta @ theta_dot)
    if "kappa" in include:
        out["kappa"] = tangent_kernel_condition(J)
    return V, out


class _Recorder:
    def __init__(self, field_fn, config: IntegratorConfig):
        self.field = field_fn
        self.cfg = config
        self.is_td = isinstance(field_fn, TDField)
        self.times, self.thetas, self.values = [], [], []
        self.diag = {}
        self.small_field_run = 0
        self.field0 = None
        self.n_forced = 0

    def _measure(self, theta):
        if self.is_td:
            f = self.field
            return _measure_td(f.approx, f.geometry, theta, f.matrix, self.cfg.diagnostics)
        fx = np.asarray(self.field(theta))
        nrm = float(np.linalg.norm(theta))
        return theta.copy(), {
            "norm_mu": nrm, "theta_norm_sq": nrm * nrm,
            "dtheta_norm_sq": float(2 * theta @ fx), "field_norm": float(np.linalg.norm(fx)),
        }

    def record(self, t, theta):
        V, d = self._measure(theta)
        self.times.append(t)
        self.thetas.append(theta.copy())
        self.values.append(V)
        for k, v in d.items():
            self.diag.setdefault(k, []).append(v)
        return d

    def status_after(self, d):
        cfg = self.cfg
        if d["norm_mu"] > cfg.divergence_threshold:
            return Status.DIVERGED
        if cfg.value_tol is not None and d.get("mu_error", math.inf) < cfg.value_tol:
            return Status.CONVERGED
        if self.field0 is None:
            self.field0 = d["field_norm"]
        tol = cfg.field_tol
        if cfg.field_rtol is not None:
            tol = max(tol, cfg.field_rtol * self.field0)
        self.small_field_run = self.small_field_run + 1 if d["field_norm"] < tol else 0
        if self.small_field_run >= 3:
            return Status.CONVERGED
        return None

    def norm_mu(self, theta):
        if self.is_td:
            V = self.field.approx.value(theta)
            return float(np.sqrt(self.field.geometry.mu @ (V * V)))
        return float(np.linalg.norm(theta))

    def trajectory(self, status):
        diag = {k: np.asarray(v) for k, v in self.diag.items()}
        return Trajectory(np.asarray(self.times), np.asarray(self.thetas), np.asarray(self.values),
                          diag, status, self.cfg, self.n_forced)


# Dormand-Prince 5(4)
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [np.array(row) for row in [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


def rk4_step(f, y, h):
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _dopri_step(f, y, h, k1):
    K = np.empty((7, y.size))
    K[0] = k1
    for i in range(1, 7):
        K[i] = f(y + h * (_A[i] @ K[:i]))
    y_new = y + h * (_B5 @ K)
    return y_new, h * (_E @ K), K[6]


def _finite(x):
    return bool(np.isfinite(x).all())


def integrate(field_fn, theta0, config: IntegratorConfig | None = None) -> Trajectory:
    """Integrate ``dtheta/dt = field_fn(theta)`` from ``t = 0``.

    Stops early when the recorded value norm exceeds the divergence
    threshold, or when the field norm stays below ``field_tol`` for three
    consecutive records (or the mu-error drops below ``value_tol``).
    """
    cfg = config or IntegratorConfig()
    rec = _Recorder(field_fn, cfg)
    y = np.array(theta0, dtype=float).ravel()

    def f(th):
        out = np.asarray(field_fn(th), dtype=float)
        if not _finite(out):
            raise NonFiniteState(f"field is not finite at theta with norm {np.linalg.norm(th):.3g}")
        return out

    t = 0.0
    if not _finite(y):
        raise NonFiniteState("initial state is not finite")
    status = rec.status_after(rec.record(t, y))
    if status is not None:
        return rec.trajectory(status)

    steps = 0
    try:
        if cfg.method == "rk4":
            n_steps = int(math.ceil(cfg.t_max / cfg.dt - 1e-9))
            for i in range(n_steps):
                h = min(cfg.dt, cfg.t_max - t)
                y = rk4_step(f, y, h)
                t = cfg.t_max if i == n_steps - 1 else t + h
                if not _finite(y):
                    raise NonFiniteState(f"state became non-finite at t={t}")
                steps += 1
                last = i == n_steps - 1
                if steps % cfg.record_every == 0 or last:
                    status = rec.status_after(rec.record(t, y))
                elif rec.norm_mu(y) > cfg.divergence_threshold:
                    status = rec.status_after(rec.record(t, y))
                if status is not None:
                    return rec.trajectory(status)
            return rec.trajectory(Status.HORIZON)

        k1 = f(y)
        h = _initial_step(f, y, k1, cfg)
        floor_fn = getattr(field_fn, "stiffness", None) if cfg.stability_floor else None
        force = False
        while t < cfg.t_max:
            if steps >= cfg.max_steps:
                raise StepFailure(f"exceeded max_steps={cfg.max_steps} at t={t}")
            h = min(h, cfg.t_max - t, cfg.h_max)
            y_new, err, k7 = _dopri_step(f, y, h, k1)
            scale = cfg.atol + cfg.rtol * np.maximum(np.abs(y), np.abs(y_new))
            e = float(np.max(np.abs(err) / scale)) if err.size else 0.0
            if not math.isfinite(e):
                e = math.inf
            if force and e > 1.0 and _finite(y_new):
                rec.n_forced += 1
                e_used, e = e, 1.0
            else:
                e_used = e
            force = False
            if e <= 1.0:
                e = e_used
                t = t + h if t + h < cfg.t_max * (1 - 1e-15) else cfg.t_max
                y, k1 = y_new, k7
                steps += 1
                last = t >= cfg.t_max
                if steps % cfg.record_every == 0 or last or rec.norm_mu(y) > cfg.divergence_threshold:
                    status = rec.status_after(rec.record(t, y))
                    if status is not None:
                        return rec.trajectory(status)
            factor = 5.0 if e == 0 else min(5.0, max(0.2, 0.9 * e ** -0.2))
            h *= factor
            if floor_fn is not None and e > 1.0:
                floor = cfg.stability_floor / max(floor_fn(y), 1e-300)
                if h < floor:
                    h, force = floor, True
            if h < 1e-14 * max(1.0, abs(t)):
                raise StepFailure(f"step size underflow (h={h:.3g}) at t={t}")
        return rec.trajectory(Status.HORIZON)
    except (DivergedBeyondRange, OverflowError, FloatingPointError):
        if rec.times and rec.times[-1] != t:
            try:
                rec.record(t, y)
            except (DivergedBeyondRange, OverflowError, FloatingPointError):
                pass
        return rec.trajectory(Status.DIVERGED)


def _initial_step(f, y, f0, cfg):
    scale = cfg.atol + cfg.rtol * np.abs(y)
    d0 = np.linalg.norm(y / scale) / math.sqrt(y.size)
    d1 = np.linalg.norm(f0 / scale) / math.sqrt(y.size)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    return min(h0, cfg.t_max, cfg.dt * 100)


def liminf_estimate(trajectory: Trajectory, quantity: str = "norm_mu", tail_fraction: float = 0.5) -> float:
    """Minimum of ``quantity`` over the final ``tail_fraction`` of the time window."""
    return float(np.min(_tail(trajectory, quantity, tail_fraction)))


def limsup_estimate(trajectory: Trajectory, quantity: str = "norm_mu", tail_fraction: float = 0.5) -> float:
    return float(np.max(_tail(trajectory, quantity, tail_fraction)))


def _tail(trajectory, quantity, tail_fraction):
    t = np.asarray(trajectory.times)
    q = trajectory.quantity(quantity) if isinstance(quantity, str) else np.asarray(quantity)
    cut = t[-1] - tail_fraction * (t[-1] - t[0])
    window = q[t >= cut]
    if window.size < 10:
        raise TooFewSamples(f"only {window.size} samples in the tail window (need 10)")
    return window


# --- plane slices of the ambient field ----------------------------------------


@dataclass(frozen=True)
class GridSpec:
    xmin: float = -1.0
    xmax: float = 1.0
    ymin: float = -1.0
    ymax: float = 1.0
    nx: int = 21
    ny: int = 21


def plane_basis_from(U) -> np.ndarray:
    """Orthonormal n x 2 basis for ``span(U)`` (Gram-Schmidt, first column kept)."""
    q, r = np.linalg.qr(np.asarray(U, dtype=float))
    return q * np.sign(np.diag(r))


def vector_field_grid(geometry: TDGeometry, plane_basis, grid_spec: GridSpec = GridSpec(), matrix=None):
    """Ambient field ``-A(V - V*)`` at ``V = V* + x b1 + y b2``, projected onto the plane.

    Returns ``(X, Y, FX, FY)`` arrays of shape ``(ny, nx)``.
    """
    Bp = np.asarray(plane_basis, dtype=float)
    if not np.allclose(Bp.T @ Bp, np.eye(2), atol=1e-10):
        raise ValueError("plane_basis must have two orthonormal columns")
    M = geometry.A if matrix is None else matrix
    K = -Bp.T @ M @ Bp
    xs = np.linspace(grid_spec.xmin, grid_spec.xmax, grid_spec.nx)
    ys = np.linspace(grid_spec.ymin, grid_spec.ymax, grid_spec.ny)
    X, Y = np.meshgrid(xs, ys)
    FX = K[0, 0] * X + K[0, 1] * Y
    FY = K[1, 0] * X + K[1, 1] * Y
    return X, Y, FX, FY


def circulation(geometry: TDGeometry, plane_basis, radius=1.0, n_points=720, matrix=None) -> float:
    """Loop integral of the projected field around a circle centred at ``V*``."""
    Bp = np.asarray(plane_basis, dtype=float)
    M = geometry.A if matrix is None else matrix
    s = np.linspace(0.0, 2 * np.pi, n_points, endpoint=False)
    total = 0.0
    ds = 2 * np.pi / n_points
    for a in s:
        p = radius * np.array([np.cos(a), np.sin(a)])
        tangent = radius * np.array([-np.sin(a), np.cos(a)])
        F = -Bp.T @ M @ (Bp @ p)
        total += float(F @ tangent) * ds
    return total


def write_grid_csv(path, X, Y, FX, FY) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "fx", "fy"])
        for row in zip(X.ravel(), Y.ravel(), FX.ravel(), FY.ravel()):
            w.writerow([repr(float(v)) for v in row])


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
