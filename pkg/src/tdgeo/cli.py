"""``tdgeo`` command-line interface.

Exit codes: 0 success, 1 a verified claim failed, 2 usage error, 3 invalid input.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import approximators as ap
from . import experiments as ex
from . import verify as vf
from .dynamics import (
    GridSpec,
    IntegratorConfig,
    ensure_dir,
    integrate,
    plane_basis_from,
    read_trajectory_csv,
    td_vector_field,
    vector_field_grid,
    write_grid_csv,
)
from .errors import NoComplexEigenvalue, TDGeoError
from .mrp import load_mrp, td_matrix
from .spectral import _encode_inf, reversibility_report

EXIT_OK, EXIT_CLAIM, EXIT_USAGE, EXIT_INPUT = 0, 1, 2, 3


class UsageError(Exception):
    pass


def out_dir(arg) -> Path:
    return Path(arg or os.environ.get("TDGEO_OUT") or "tdgeo_out")


def _dump(obj) -> str:
    return json.dumps(_encode_inf(obj), indent=2, sort_keys=True)


def cmd_analyze(args) -> int:
    mrp = load_mrp(args.mrp)
    g = td_matrix(mrp)
    rep = reversibility_report(g, range(1, 6))
    try:
        lam, _ = ap.complex_eigenpair(g.A)
        pair = [lam.real, lam.imag]
    except NoComplexEigenvalue:
        pair = None
    report = {
        "n": g.n, "gamma": g.gamma, "mu": g.mu.tolist(), "V_star": g.V_star.tolist(),
        "lambda_min_S_A": float(np.linalg.eigvalsh(g.S_A)[0]), "rho": rep.rho, "lambda2": rep.lambda2,
        "complex_pair": pair, "rho_k": {str(k): v for k, v in rep.rho_k.items()}, "B": g.B,
    }
    text = _dump(report)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return EXIT_OK


def cmd_simulate(args) -> int:
    spec = ex.ExperimentSpec.load(args.spec)
    summary = ex.run_experiment(spec, out_dir(args.out or spec.output_dir))
    for r in summary["runs"]:
        print(f"{r['name']}: {r['status']}")
    return EXIT_OK


def cmd_spiral(args) -> int:
    summary = ex.run_spiral(args.deltas, args.ks, args.gamma, out_dir(args.out))
    for p in summary["points"]:
        print(f"{p['sweep']:>5} delta={p['delta']:<5g} k={p['k']}: {p['status']}")
    return EXIT_OK


def cmd_construct_divergent(args) -> int:
    g = td_matrix(load_mrp(args.mrp))
    try:
        approx = ap.construct_divergent(g, args.epsilon_fraction, extension_rank=args.extension_rank)
    except NoComplexEigenvalue as exc:
        print(f"refused: {exc}; spectrum of A = {np.asarray(exc.eigenvalues).tolist()}", file=sys.stderr)
        return EXIT_INPUT
    field = td_vector_field(approx, vf._zero_reward(g))
    traj = integrate(field, np.zeros(approx.param_dim),
                     IntegratorConfig(t_max=args.certificate_t, diagnostics={"mu_error"}))
    thdot = [float(field(th)[0]) for th in traj.thetas]
    cert = {"t_end": float(traj.times[-1]), "n_samples": len(traj), "min_theta_dot": min(thdot),
            "theta_dot_positive": min(thdot) > 0, "premise_worst_slack": vf.divergence_premise(approx, g.A),
            "norm_growth": float(np.linalg.norm(traj.values[-1]) / np.linalg.norm(traj.values[0]))}
    Path(args.out).write_text(_dump({"approximator": approx.to_spec(), "certificate": cert}) + "\n")
    print(f"wrote {args.out}; min dtheta/dt = {cert['min_theta_dot']:.3g}")
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        claims = vf.CLAIMS if args.claim == "all" else (vf.normalize_claim(args.claim),)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if args.mrp is not None:
        reports = [_verify_on_file(claim, args) for claim in claims]
    else:
        cfg = vf.SuiteConfig(seed=args.seed, claims=claims, corrupt=args.corrupt)
        reports = vf.run_full_suite(cfg, progress=lambda r: print(_line(r), flush=True))
    if args.mrp is not None:
        for r in reports:
            print(_line(r))
    vf.write_reports(reports, out_dir(args.out))
    return EXIT_OK if all(r.passed for r in reports) else EXIT_CLAIM


def _verify_on_file(claim, args):
    g = td_matrix(load_mrp(args.mrp))
    if claim == "P1_divergence":
        return vf.verify_divergence(g, fixture={"mrp": {"builder": "file", "path": str(args.mrp)}})
    if claim == "P2_kstep":
        return vf.verify_kstep_proposition(g, fixture={"mrp": {"builder": "file", "path": str(args.mrp)}})
    raise UsageError(f"claim {claim} runs on its canonical fixtures; drop --mrp")


def _line(r) -> str:
    m = r.margin
    margin = "nan" if m is None or (isinstance(m, float) and math.isnan(m)) else f"{m:.4g}"
    note = f" ({r.notes})" if r.notes else ""
    return f"{r.claim_id:<14} {r.status.upper():<15} margin={margin}{note}"


def cmd_plot_data(args) -> int:
    out = ensure_dir(out_dir(args.out))
    if args.vector_field:
        g = td_matrix(load_mrp(args.vector_field))
        basis = _plane(g, args.plane)
        r = args.radius
        grid = vector_field_grid(g, basis, GridSpec(-r, r, -r, r, args.grid, args.grid))
        write_grid_csv(out / "vector_field.csv", *grid)
        ex.render_svg(out / "vector_field.svg", grid=grid)
        print(f"wrote {out / 'vector_field.csv'}")
    if args.trajectory:
        _, cols = read_trajectory_csv(args.trajectory)
        if "plane_x" in cols:
            xy = np.column_stack([cols["plane_x"], cols["plane_y"]])
        else:
            if not args.mrp:
                raise UsageError("--mrp is required to project a trajectory without plane columns")
            g = td_matrix(load_mrp(args.mrp))
            n = g.n
            V = np.column_stack([cols[f"v_{i}"] for i in range(n)])
            xy = (V - g.V_star) @ _plane(g, args.plane)
        stem = Path(args.trajectory).stem
        with open(out / f"{stem}_plane.csv", "w") as fh:
            fh.write("t,x,y\n")
            for t, (x, y) in zip(cols["t"], xy):
                fh.write(f"{t!r},{x!r},{y!r}\n")
        ex.render_svg(out / f"{stem}_plane.svg", paths=[xy])
        print(f"wrote {out / (stem + '_plane.csv')}")
    if not (args.vector_field or args.trajectory):
        raise UsageError("give --vector-field MRP and/or --trajectory CSV")
    return EXIT_OK


def _plane(g, kind):
    if kind == "eig":
        try:
            _, v = ap.complex_eigenpair(g.A)
            return plane_basis_from(np.column_stack([v.real, v.imag]))
        except NoComplexEigenvalue:
            pass
    return plane_basis_from(np.eye(g.n)[:, :2])


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text):
    return [int(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tdgeo", description="Geometry and dynamics of expected TD learning.")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="geometry report for an MRP file")
    a.add_argument("mrp")
    a.add_argument("--out")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("simulate", help="run an experiment spec")
    s.add_argument("spec")
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("spiral", help="delta and k sweeps on the three-state spiral chain")
    sp.add_argument("--deltas", type=_floats, default=list(ex.DEFAULT_DELTAS))
    sp.add_argument("--ks", type=_ints, default=list(ex.DEFAULT_KS))
    sp.add_argument("--gamma", type=float, default=0.9)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_spiral)

    c = sub.add_parser("construct-divergent", help="build and certify a divergent approximator")
    c.add_argument("mrp")
    c.add_argument("out")
    c.add_argument("--epsilon-fraction", type=float, default=0.5)
    c.add_argument("--extension-rank", type=int, default=0)
    c.add_argument("--certificate-t", type=float, default=10.0)
    c.set_defaults(func=cmd_construct_divergent)

    v = sub.add_parser("verify", help="run the claim checks")
    v.add_argument("--claim", default="all")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out")
    v.add_argument("--mrp", help="run P1/P2 on this MRP file instead of the canonical fixtures")
    v.add_argument("--corrupt", choices=["negate_A"])
    v.set_defaults(func=cmd_verify)

    pd = sub.add_parser("plot-data", help="vector-field grids, plane projections and SVG")
    pd.add_argument("--vector-field", metavar="MRP")
    pd.add_argument("--trajectory", metavar="CSV")
    pd.add_argument("--mrp")
    pd.add_argument("--plane", choices=["eig", "coords"], default="eig")
    pd.add_argument("--radius", type=float, default=1.0)
    pd.add_argument("--grid", type=int, default=21)
    pd.add_argument("--out")
    pd.set_defaults(func=cmd_plot_data)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TDGeoError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
