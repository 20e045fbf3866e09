import json

import numpy as np
import pytest

from tdgeo import experiments as ex
from tdgeo.errors import ParseError


def test_transition_monotone():
    assert ex.transition_is_monotone(["Diverged", "Diverged", "Converged", "Converged"])
    assert not ex.transition_is_monotone(["Diverged", "Converged", "Diverged"])


def test_spiral_outputs(tmp_path):
    summary = ex.run_spiral([0.0, 0.23], [1, 3], out_dir=tmp_path)
    status = {(p["sweep"], p["delta"], p["k"]): p["status"] for p in summary["points"]}
    assert status[("delta", 0.0, 1)] == "Diverged"
    assert status[("delta", 0.23, 1)] == "Converged"
    assert status[("k", 0.0, 3)] == "Converged"
    assert (tmp_path / "spiral_delta_delta=0.23_k=1.csv").exists()
    assert json.loads((tmp_path / "spiral_summary.json").read_text())["gamma"] == 0.9


def test_spiral_rejects_empty_sweep():
    with pytest.raises(ValueError):
        ex.run_spiral([], [1])


SPEC = {
    "name": "lin",
    "mrp": {"builder": "random", "n": 4, "gamma": 0.9, "seed": 1},
    "approximator": {"kind": "linear", "features": {"rank": 2, "seed": 0}},
    "integrator": {"t_max": 50.0},
    "sweep": {"gamma": [0.5, 0.9], "k": [1, 2]},
}


def test_spec_points():
    spec = ex.ExperimentSpec.from_dict(SPEC)
    assert list(spec.points()) == [{"gamma": 0.5, "k": 1}, {"gamma": 0.5, "k": 2},
                                   {"gamma": 0.9, "k": 1}, {"gamma": 0.9, "k": 2}]


@pytest.mark.parametrize("bad", [{"sweep": {"alpha": [1]}}, {"sweep": {"k": []}}, {"colour": 1}])
def test_spec_validation(bad):
    with pytest.raises(ValueError):
        ex.ExperimentSpec.from_dict({**SPEC, **bad})


def test_spec_parse_error(tmp_path):
    p = tmp_path / "s.json"
    p.write_text('{"name": "x",\n "mrp": ')
    with pytest.raises(ParseError, match="line 2"):
        ex.ExperimentSpec.load(p)


def test_run_experiment(tmp_path):
    summary = ex.run_experiment(ex.ExperimentSpec.from_dict(SPEC), tmp_path)
    assert len(summary["runs"]) == 4
    assert all(r["status"] in ("Converged", "HorizonReached") for r in summary["runs"])
    assert (tmp_path / "lin_summary.json").exists()
    assert (tmp_path / (summary["runs"][0]["name"] + ".csv")).exists()


def test_render_svg(tmp_path):
    X, Y = np.meshgrid(np.linspace(-1, 1, 3), np.linspace(-1, 1, 3))
    ex.render_svg(tmp_path / "f.svg", grid=(X, Y, -Y, X), paths=[np.array([[0, 0], [0.5, 0.5]])])
    text = (tmp_path / "f.svg").read_text()
    assert text.count("<line") == 9 and "<polyline" in text
    with pytest.raises(ValueError):
        ex.render_svg(tmp_path / "g.svg")
