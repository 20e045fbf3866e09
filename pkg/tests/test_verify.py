import json
import math

import numpy as np
import pytest

from tdgeo import approximators as ap
from tdgeo import verify as vf
from tdgeo.errors import NotHomogeneous
from tdgeo.mrp import cycle_mrp, random_mrp, reversible_mrp, td_matrix


def test_report_json_round_trip():
    r = vf.VerificationReport("T3", True, {"margin": math.inf, "x": [1.0, math.nan]}, {"seed": 0}, 1e-6)
    d = json.loads(r.to_json())
    assert d["measured"]["margin"] == "inf" and d["measured"]["x"][1] is None
    back = vf.VerificationReport.from_dict(d)
    assert back.margin == math.inf and back.status == "pass"


def test_claim_aliases():
    assert vf.normalize_claim("P2") == "P2_kstep"
    assert vf.normalize_claim("T1") == "T1"
    with pytest.raises(ValueError):
        vf.normalize_claim("T9")


def test_layer_identity_single_network():
    net = ap.homogeneous_network([3, 3, 1], np.random.default_rng(0).normal(size=(4, 3)), "relu", 0)
    rep = vf.verify_homogeneous_lemma(net, seed=0)
    assert rep.passed
    assert rep.measured["layer_factors"] == [1, 1, 1]


def test_fd_error_flags_a_wrong_jacobian():
    class Broken(ap.Tabular):
        def jacobian(self, theta):
            return 2 * super().jacobian(theta)
    assert vf.jacobian_fd_error(Broken(3), np.ones(3)) > 0.4


def test_attraction_single_fixture():
    g = td_matrix(random_mrp(4, 0.9, 3))
    net = ap.homogeneous_network([4, 1], np.random.default_rng(3).normal(size=(4, 3)), "square", 0)
    rep = vf.verify_theorem1(net, g, seed=0)
    assert rep.passed, rep.measured
    assert rep.measured["liminf_norm_mu"] <= g.B * (1 + vf.LIMINF_TOL)
    assert rep.measured["mechanism_holds"]


def test_attraction_rejects_non_homogeneous():
    g = td_matrix(random_mrp(4, 0.9, 3))
    with pytest.raises(NotHomogeneous):
        vf.verify_theorem1(ap.perturbed_tabular(4, 0.3), g)


def test_linear_baseline():
    g = td_matrix(random_mrp(5, 0.9, 2))
    Phi = np.random.default_rng(2).normal(size=(5, 2))
    rep = vf.verify_linear(Phi, g)
    assert rep.passed and rep.measured["bound_holds"]


def test_divergence_not_applicable_on_reversible_chain():
    rep = vf.verify_divergence(td_matrix(reversible_mrp(4, 0.9, 0)))
    assert rep.status == "not_applicable"
    assert "real spectrum" in rep.notes


def test_divergence_on_spiral_chain():
    rep = vf.verify_divergence(td_matrix(cycle_mrp()))
    assert rep.passed, rep.measured


def test_perturbed_tabular_calibration():
    g = td_matrix(cycle_mrp(3, 0.0, 0.5, 0.9, reward=[1.0, 0.0, -1.0]))
    approx, calib = vf.calibrate_perturbation(g)
    assert approx.kappa_bound() < calib["rho"]
    rep = vf.verify_theorem3(approx, g)
    assert rep.passed, rep.measured


@pytest.mark.parametrize("check", [vf.check_T3, lambda **kw: vf.check_B_linear(n_fixtures=2, **kw),
                                   lambda **kw: vf.check_T1(n_mrps=1, n_seeds=1, **kw)])
def test_corrupted_matrix_is_caught(check):
    assert not check(corrupt="negate_A").passed


def test_rerun_reproduces_report():
    rep = vf.check_LE(seed=3, n_seeds=2, depths=(1, 2))
    again = vf.rerun(vf.VerificationReport.from_dict(json.loads(rep.to_json())))
    assert again.passed == rep.passed
    assert again.measured["margin"] == rep.measured["margin"]


def test_bihoelder_linear_constants():
    g = td_matrix(random_mrp(4, 0.9, 0))
    Phi = np.random.default_rng(0).normal(size=(4, 2))
    c = vf.bihoelder_constants(ap.linear(Phi), g)
    s = np.linalg.svd(np.sqrt(g.mu)[:, None] * Phi, compute_uv=False)
    assert c["c"] == pytest.approx(s[-1]) and c["C"] == pytest.approx(s[0])


def test_suite_writes_reports(tmp_path):
    reports = vf.run_full_suite({"claims": ["LE", "P2"]})
    assert [r.claim_id for r in reports] == ["L_homogeneous", "P2_kstep"]
    summary = vf.write_reports(reports, tmp_path)
    assert summary.read_text().splitlines()[0] == "claim_id,passed,status,margin"
    assert (tmp_path / "L_homogeneous.json").exists()
