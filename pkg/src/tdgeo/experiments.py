"""Spiral sweeps, spec-driven simulations and minimal SVG rendering."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import approximators as ap
from .dynamics import (
    IntegratorConfig,
    Status,
    ensure_dir,
    integrate,
    k_step_vector_field,
    plane_basis_from,
)
from .errors import NoComplexEigenvalue, ParseError, TDGeoError
from .fixtures import build_approximator, build_mrp
from .mrp import cycle_mrp, k_step_matrix, mu_norm, td_matrix
from .spectral import _encode_inf, effective_reversibility

DEFAULT_DELTAS = (0.0, 0.1, 0.2, 0.23)
DEFAULT_KS = (1, 2, 3)


@dataclass
class SpiralPoint:
    sweep: str
    delta: float
    k: int
    status: str
    rho_k: float
    complex_pair: bool
    t_end: float
    initial_mu_error: float
    final_mu_error: float
    n_samples: int
    csv: str | None = None
    note: str = ""


def spiral_config(approx, geometry, t_max=1e12, value_fraction=1e-3) -> IntegratorConfig:
    """Converged once the mu-error falls to ``value_fraction`` of its start."""
    v0 = mu_norm(geometry, approx.V0 - geometry.V_star)
    return IntegratorConfig(t_max=t_max, value_tol=value_fraction * v0, diagnostics={"mu_error", "theta_norm"},
                            max_steps=200_000)


def spiral_run(approx, delta, k, gamma=0.9, config=None):
    g = td_matrix(cycle_mrp(3, delta, 0.5, gamma))
    try:
        ap.complex_eigenpair(k_step_matrix(g, k)[0])
        complex_pair = True
    except NoComplexEigenvalue:
        complex_pair = False
    cfg = config or spiral_config(approx, g)
    traj = integrate(k_step_vector_field(approx, g, k), np.zeros(approx.param_dim), cfg)
    return g, traj, complex_pair


def run_spiral(deltas=DEFAULT_DELTAS, ks=DEFAULT_KS, gamma=0.9, out_dir=None, config=None) -> dict:
    """Delta sweep at ``k = 1`` and k sweep at ``delta = 0`` with one fixed approximator.

    The approximator is built once from the ``delta = 0`` chain and reused at
    every sweep point.
    """
    deltas, ks = list(deltas), list(ks)
    if not deltas or not ks:
        raise ValueError("deltas and ks must be nonempty")
    base = td_matrix(cycle_mrp(3, 0.0, 0.5, gamma))
    approx = ap.construct_divergent(base)
    basis = plane_basis_from(approx.U)
    out = ensure_dir(out_dir) if out_dir is not None else None
    points = []
    plan = [("delta", d, 1) for d in deltas] + [("k", 0.0, k) for k in ks]
    for sweep, delta, k in plan:
        g, traj, complex_pair = spiral_run(approx, delta, k, gamma, config)
        A_k = k_step_matrix(g, k)[0]
        err = traj.quantity("mu_error")
        pt = SpiralPoint(sweep=sweep, delta=delta, k=k, status=str(traj.terminal_status),
                         rho_k=effective_reversibility(A_k), complex_pair=complex_pair,
                         t_end=float(traj.times[-1]), initial_mu_error=float(err[0]),
                         final_mu_error=float(err[-1]), n_samples=len(traj))
        if not complex_pair:
            pt.note = "A_k has a real spectrum at this point"
        if out is not None:
            xy = traj.values @ basis
            path = out / f"spiral_{sweep}_delta={delta:g}_k={k}.csv"
            traj.to_csv(path, extra_columns={"plane_x": xy[:, 0], "plane_y": xy[:, 1]})
            pt.csv = path.name
        points.append(pt)
    summary = {
        "gamma": gamma, "deltas": deltas, "ks": ks,
        "approximator": approx.to_spec(),
        "points": [asdict(p) for p in points],
    }
    if out is not None:
        (out / "spiral_summary.json").write_text(json.dumps(_encode_inf(summary), indent=2, sort_keys=True))
    return summary


def transition_is_monotone(statuses) -> bool:
    """True unless a Converged point is followed by a Diverged one."""
    seen_converged = False
    for s in statuses:
        if s == str(Status.CONVERGED):
            seen_converged = True
        elif s == str(Status.DIVERGED) and seen_converged:
            return False
    return True


# --- experiment specs -----------------------------------------------------------


@dataclass
class ExperimentSpec:
    name: str
    mrp: dict
    approximator: dict
    integrator: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    theta0: list | None = None
    k: int = 1
    output_dir: str | None = None

    SWEEP_KEYS = ("delta", "k", "gamma", "seed")

    def __post_init__(self):
        for key, vals in self.sweep.items():
            if key not in self.SWEEP_KEYS:
                raise ValueError(f"unknown sweep parameter {key!r}")
            if not isinstance(vals, list) or not vals:
                raise ValueError(f"sweep grid for {key!r} must be a nonempty list")

    @classmethod
    def from_dict(cls, d: dict):
        try:
            return cls(**d)
        except TypeError as exc:
            raise ValueError(f"invalid experiment spec: {exc}") from exc

    @classmethod
    def load(cls, path):
        text = Path(path).read_text()
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
        return cls.from_dict(d)

    def points(self):
        keys = list(self.sweep)
        for combo in itertools.product(*(self.sweep[k] for k in keys)):
            yield dict(zip(keys, combo))


def run_point(spec: ExperimentSpec, params: dict):
    mdesc = dict(spec.mrp)
    adesc = dict(spec.approximator)
    for key in ("delta", "gamma"):
        if key in params:
            mdesc[key] = params[key]
    if "seed" in params:
        adesc["seed"] = params["seed"]
        if mdesc.get("builder") == "random":
            mdesc.setdefault("seed", params["seed"])
    g = td_matrix(build_mrp(mdesc))
    approx = build_approximator(adesc, g)
    k = params.get("k", spec.k)
    cfg = IntegratorConfig(**spec.integrator)
    if spec.theta0 is not None:
        theta0 = np.asarray(spec.theta0, dtype=float)
    elif isinstance(approx, ap.DivergentApproximator):
        theta0 = np.zeros(approx.param_dim)
    elif isinstance(approx, ap.HomogeneousNetwork):
        rng = np.random.default_rng(params.get("seed", adesc.get("seed", 0)))
        theta0 = rng.normal(size=approx.param_dim)
        theta0 /= np.linalg.norm(theta0)
    else:
        theta0 = np.zeros(approx.param_dim)
    return integrate(k_step_vector_field(approx, g, k), theta0, cfg)


def point_name(spec: ExperimentSpec, params: dict) -> str:
    return "_".join([spec.name] + [f"{k}={v:g}" if isinstance(v, float) else f"{k}={v}" for k, v in params.items()])


def run_experiment(spec: ExperimentSpec, out_dir) -> dict:
    out = ensure_dir(out_dir)
    runs = []
    for params in spec.points():
        name = point_name(spec, params)
        try:
            traj = run_point(spec, params)
        except TDGeoError as exc:
            runs.append({"name": name, "params": params, "status": "Error", "error": f"{type(exc).__name__}: {exc}"})
            continue
        traj.to_csv(out / f"{name}.csv")
        runs.append({"name": name, "params": params, "status": str(traj.terminal_status),
                     "t_end": float(traj.times[-1]), "csv": f"{name}.csv"})
    summary = {"name": spec.name, "spec": asdict(spec), "runs": runs}
    (out / f"{spec.name}_summary.json").write_text(json.dumps(_encode_inf(summary), indent=2, sort_keys=True))
    return summary


# --- SVG ---------------------------------------------------------------------------


def render_svg(path, grid=None, paths=(), size=480, margin=20) -> None:
    """Write arrows for a vector-field grid ``(X, Y, FX, FY)`` and polylines for ``paths``."""
    xs, ys = [], []
    if grid is not None:
        X, Y, _, _ = grid
        xs += [X.min(), X.max()]
        ys += [Y.min(), Y.max()]
    for p in paths:
        p = np.asarray(p)
        xs += [p[:, 0].min(), p[:, 0].max()]
        ys += [p[:, 1].min(), p[:, 1].max()]
    if not xs:
        raise ValueError("nothing to render")
    x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
    span = max(x1 - x0, y1 - y0, 1e-12)
    scale = (size - 2 * margin) / span

    def px(x, y):
        return margin + (x - x0) * scale, size - margin - (y - y0) * scale

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
             f'viewBox="0 0 {size} {size}">',
             '<defs><marker id="h" markerWidth="6" markerHeight="6" refX="5" refY="3" orient="auto">'
             '<path d="M0,0 L6,3 L0,6 z"/></marker></defs>']
    if grid is not None:
        X, Y, FX, FY = (np.asarray(a).ravel() for a in grid)
        mag = np.hypot(FX, FY)
        cell = span / max(int(math.sqrt(X.size)), 1)
        top = mag.max() if mag.size and mag.max() > 0 else 1.0
        for x, y, fx, fy in zip(X, Y, FX, FY):
            a, b = px(x, y)
            c, d = px(x + 0.8 * cell * fx / top, y + 0.8 * cell * fy / top)
            parts.append(f'<line x1="{a:.2f}" y1="{b:.2f}" x2="{c:.2f}" y2="{d:.2f}" '
                         'stroke="steelblue" marker-end="url(#h)"/>')
    for p in paths:
        pts = " ".join("{:.2f},{:.2f}".format(*px(x, y)) for x, y in np.asarray(p))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="crimson"/>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
