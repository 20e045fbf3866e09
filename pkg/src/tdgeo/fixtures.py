"""Build MRPs and approximators from small JSON-able descriptors.

Descriptors are what experiment specs and verification reports store, so a
run can be reproduced from its recorded config alone.
"""

from __future__ import annotations

import numpy as np

from . import approximators as ap
from .mrp import MarkovRewardProcess, cycle_mrp, load_mrp, random_mrp, reversible_mrp, td_matrix


def build_mrp(desc: dict) -> MarkovRewardProcess:
    b = desc.get("builder", "explicit")
    gamma = desc.get("gamma", 0.9)
    if b == "cycle":
        m = cycle_mrp(desc.get("n", 3), desc.get("delta", 0.0), desc.get("self_loop", 0.5), gamma)
        if "reward" in desc:
            m = MarkovRewardProcess(m.P, desc["reward"], gamma)
        return m
    if b == "random":
        return random_mrp(desc["n"], gamma, desc.get("seed", 0), desc.get("reward_scale", 1.0))
    if b == "reversible":
        return reversible_mrp(desc["n"], gamma, desc.get("seed", 0))
    if b == "file":
        return load_mrp(desc["path"])
    if b == "explicit":
        reward = desc["reward"]
        if isinstance(reward, dict):
            reward = reward.get("vector", reward.get("matrix"))
        return MarkovRewardProcess(desc["P"], reward, gamma)
    raise ValueError(f"unknown MRP builder {b!r}")


def feature_matrix(n: int, spec) -> np.ndarray:
    """``spec`` is a matrix, ``"ones"``, ``"identity"`` or ``{"rank": r, "seed": s}``."""
    if isinstance(spec, str):
        if spec == "ones":
            return np.ones((n, 1))
        if spec == "identity":
            return np.eye(n)
        raise ValueError(f"unknown feature spec {spec!r}")
    if isinstance(spec, dict):
        rng = np.random.default_rng(spec.get("seed", 0))
        return rng.normal(size=(n, spec.get("rank", 1)))
    return np.atleast_2d(np.asarray(spec, dtype=float))


def build_approximator(desc: dict, geometry=None) -> ap.Approximator:
    kind = desc["kind"]
    n = geometry.n if geometry is not None else desc.get("n")
    if kind == "tabular":
        return ap.tabular(n)
    if kind == "linear":
        return ap.linear(feature_matrix(n, desc.get("features", "ones")))
    if kind == "homogeneous" and "weights" not in desc:
        feats = feature_matrix(n, desc.get("features", {"rank": 3, "seed": desc.get("seed", 0)}))
        return ap.homogeneous_network(desc.get("layer_dims", [4, 1]), feats,
                                      desc.get("activation", "relu"), desc.get("seed", 0))
    if kind == "residual" and "inner" in desc and desc["inner"].get("kind") != "homogeneous":
        Phi = feature_matrix(n, desc.get("features", "ones"))
        inner = dict(desc["inner"])
        if "features" in inner:
            inner["features"] = feature_matrix(n, inner["features"])
        return ap.residual_network(Phi, inner, desc.get("seed", 0))
    if kind == "perturbed_tabular" and "M" not in desc:
        return ap.perturbed_tabular(n, desc["beta"], desc.get("seed", 0))
    if kind == "divergent" and "Q" not in desc:
        g = geometry
        if "construct_on" in desc:
            g = td_matrix(build_mrp(desc["construct_on"]))
        return ap.construct_divergent(g, desc.get("epsilon_fraction", 0.5), desc.get("v0_mode", "u1"),
                                      desc.get("extension_rank", 0))
    return ap.approximator_from_spec(desc)
