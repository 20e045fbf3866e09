"""Acceptance criteria, one test each, with tolerance and wall-clock limits.

Every test appends a PASS/FAIL line that the terminal summary prints.
"""

import math
import time

import numpy as np
import scipy.linalg
import scipy.optimize

from conftest import ACCEPTANCE_LINES
from tdgeo import verify as vf
from tdgeo.dynamics import IntegratorConfig, Status, integrate, tabular_rhs
from tdgeo.experiments import run_spiral, transition_is_monotone
from tdgeo.mrp import random_mrp, td_matrix
from tdgeo.spectral import reversibility_coefficient, reversibility_quotient


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


def record(number, title, ok, elapsed, limit, detail=""):
    passed = bool(ok) and elapsed < limit
    line = f"criterion {number:>2}  {'PASS' if passed else 'FAIL'}  {title:<34} {elapsed:7.1f}s (limit {limit}s)  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def random_family(count, seed, sizes=range(2, 9), gammas=(0.5, 0.9, 0.99)):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        yield random_mrp(int(rng.choice(list(sizes))), float(rng.choice(gammas)), int(rng.integers(2**31 - 1)))


def test_01_geometry_properties():
    worst = {"stationary": 0.0, "bellman": 0.0, "contraction": -math.inf}
    min_eig = math.inf
    rng = np.random.default_rng(1)
    with Timer() as t:
        for m in random_family(100, seed=11):
            g = td_matrix(m)
            worst["stationary"] = max(worst["stationary"], np.abs(g.mu @ g.P - g.mu).max())
            worst["bellman"] = max(worst["bellman"], np.abs(g.V_star - g.R - g.gamma * g.P @ g.V_star).max())
            min_eig = min(min_eig, np.linalg.eigvalsh(g.S_A)[0])
            v = rng.normal(size=(g.n, 1000))
            ratio = np.sqrt(g.mu @ (g.P @ v) ** 2) - np.sqrt(g.mu @ v ** 2)
            worst["contraction"] = max(worst["contraction"], ratio.max())
    ok = (worst["stationary"] < 1e-10 and worst["bellman"] < 1e-10 and min_eig > 0
          and worst["contraction"] <= 1e-12)
    assert record(1, "geometry properties", ok, t.elapsed, 10,
                  f"stat={worst['stationary']:.1e} bell={worst['bellman']:.1e} min_eig={min_eig:.2e}")


def brute_force_rho(g, starts=8, seed=0):
    rng = np.random.default_rng(seed)

    def q(v):
        return reversibility_quotient(g.S_A, g.R_A, g.A, v / np.linalg.norm(v))
    best = math.inf
    for x0 in rng.normal(size=(starts, g.n)):
        res = scipy.optimize.minimize(q, x0, method="BFGS", options={"gtol": 1e-10})
        best = min(best, res.fun)
    return best


def test_02_reversibility_oracle():
    worst = 0.0
    with Timer() as t:
        for m in random_family(20, seed=22, sizes=range(3, 7)):
            g = td_matrix(m)
            rho = reversibility_coefficient(g.S_A, g.R_A, g.A)
            worst = max(worst, abs(brute_force_rho(g) - rho) / rho)
        A = np.array([[2.0, 0.4, 0.1], [0.4, 1.0, 0.2], [0.1, 0.2, 3.0]])
        sym_inf = reversibility_coefficient(A, A - A.T, A) == math.inf
    assert record(2, "reversibility oracle", worst < 0.01 and sym_inf, t.elapsed, 30,
                  f"max rel gap={worst:.2e} symmetric->inf={sym_inf}")


def test_03_linear_td():
    with Timer() as t:
        rep = vf.check_B_linear(seed=0, n_fixtures=10)
    dist = max(f["measured"]["theta_distance"] for f in rep.measured["fixtures"])
    assert record(3, "linear TD fixed point", rep.passed, t.elapsed, 10, f"max |theta-theta*|={dist:.1e}")


def test_04_homogeneous_attraction():
    with Timer() as t:
        square = vf.check_T1(seed=0, activation="square")
        relu = vf.check_T1(seed=0, activation="relu")
    assert record(4, "homogeneous nets (square + relu)", square.passed and relu.passed, t.elapsed, 120,
                  f"square margin={square.measured['margin']:.3g} failed={square.measured['n_failed']}; "
                  f"relu margin={relu.measured['margin']:.3g} failed={relu.measured['n_failed']}")


def test_05_residual_networks():
    with Timer() as t:
        t2, c1 = vf.check_T2_C1(seed=0)
    assert record(5, "residual nets + value-error bound", t2.passed and c1.passed, t.elapsed, 120,
                  f"T2 margin={t2.measured['margin']:.3g} C1 margin={c1.measured['margin']:.3g}")


def test_06_perturbed_tabular():
    with Timer() as t:
        rep = vf.check_T3(seed=0)
    assert record(6, "perturbed tabular convergence", rep.passed, t.elapsed, 30,
                  f"margin={rep.measured['margin']:.3g}")


def test_07_divergence():
    with Timer() as t:
        rep = vf.check_P1(seed=0)
    applicable = len(rep.measured["fixtures"]) - rep.measured["n_not_applicable"]
    assert record(7, "divergent construction", rep.passed and applicable >= 11, t.elapsed, 60,
                  f"applicable={applicable} not_applicable={rep.measured['n_not_applicable']}")


def test_08_k_step_bound():
    with Timer() as t:
        rep = vf.check_P2(seed=0)
    assert record(8, "k-step reversibility bound", rep.passed, t.elapsed, 60,
                  f"failed fixtures={rep.measured['n_failed']}/100")


def test_09_spiral_reproduction():
    with Timer() as t:
        summary = run_spiral((0.0, 0.1, 0.2, 0.23), (1, 2, 3), gamma=0.9)
    delta = [p["status"] for p in summary["points"] if p["sweep"] == "delta"]
    ks = {p["k"]: p["status"] for p in summary["points"] if p["sweep"] == "k"}
    ok = (delta[0] == str(Status.DIVERGED) and delta[-1] == str(Status.CONVERGED)
          and transition_is_monotone(delta) and ks[1] == str(Status.DIVERGED) and ks[3] == str(Status.CONVERGED))
    assert record(9, "spiral delta and k sweeps", ok, t.elapsed, 60, f"delta={delta} k={ks}")


def test_10_layer_identity():
    with Timer() as t:
        rep = vf.check_LE(seed=0, n_seeds=20)
    errs = [f["measured"] for f in rep.measured["fixtures"]]
    ident = max(e["max_layer_identity_error"] for e in errs)
    fd = max(e["max_fd_error"] for e in errs)
    assert record(10, "per-layer homogeneity identity", rep.passed, t.elapsed, 30,
                  f"identity={ident:.1e} fd={fd:.1e}")


def test_11_rk4_order():
    with Timer() as t:
        g = td_matrix(random_mrp(5, 0.9, 3))
        V0 = np.linspace(-2, 2, 5)
        T = 4.0
        exact = g.V_star + scipy.linalg.expm(-g.A * T) @ (V0 - g.V_star)
        errs = []
        for dt in (0.8, 0.4, 0.2, 0.1):
            traj = integrate(tabular_rhs(g), V0, IntegratorConfig(method="rk4", dt=dt, t_max=T, field_tol=1e-300))
            errs.append(float(np.abs(traj.thetas[-1] - exact).max()))
        ratios = [a / b for a, b in zip(errs, errs[1:])]
    assert record(11, "RK4 order", min(ratios) >= 6.4, t.elapsed, 5,
                  "ratios=" + ", ".join(f"{r:.2f}" for r in ratios))
