"""Building groups, specs and states from plain configuration mappings.

Vectors may be given as full payload lists, as scalars (U1), or for DiffS1 as
``*_modes = [[k, cos_amp, sin_amp], ...]`` describing ``sum cos_amp cos(kx) +
sin_amp sin(kx)``.
"""
from __future__ import annotations

import copy

import numpy as np

from .groups import Group, GroupElement, make_group
from .lagrangian import LagrangianSpec
from .metric import InertiaOperator

DEFAULTS = {
    "scenario": {"name": "scenario", "experiment": "check", "seed": 0},
    "group": {"kind": "U1", "n_modes": 64, "s": 1.0, "inertia": [1.0, 1.0, 1.0], "mass": 1.0},
    "lagrangian": {"theta": None, "theta_modes": None, "V0": 0.0, "potential_sign": "energy",
                   "perturbation": 0.0},
    "flow": {"u0": None, "u0_modes": None, "dt": 1e-3, "horizon": 10.0, "adaptive": False,
             "max_records": 1001, "regularity_ceiling": 10.0, "band": None},
    "connect": {"p": None, "q": None, "p_modes": None, "q_modes": None, "kappa": 0.5,
                "n_nodes": 33, "starts": 4, "polish": True},
    "mane": {"max_winding": 5, "n_nodes": 17, "slack": 1e-3},
    "check": {"sample_count": 200, "directions": 20, "growth_samples": 10000, "radius": 1e3,
              "legendre_samples": 100},
    "convergence": {"dt": 0.02, "horizon": 1.0, "min_order": 3.8},
    "tolerances": {"energy_drift": 1e-6, "casimir_drift": 1e-6, "momentum": 1e-10,
                   "legendre": 1e-10, "constraint": 1e-8, "el_residual": 1e-6,
                   "energy_defect": 1e-4, "fd_relative": 1e-6},
    "output": {"dir": "out"},
}

EXPERIMENTS = ("flow", "connect", "mane", "check", "convergence")


class ConfigError(ValueError):
    pass


def resolve(raw: dict) -> dict:
    """Merge ``raw`` over the defaults and validate; returns a new mapping."""
    cfg = copy.deepcopy(DEFAULTS)
    for section, values in raw.items():
        if section not in cfg:
            raise ConfigError(f"unknown section [{section}]")
        if not isinstance(values, dict):
            raise ConfigError(f"[{section}] must be a table")
        unknown = set(values) - set(cfg[section])
        if unknown:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
        cfg[section].update(values)
    if cfg["scenario"]["experiment"] not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}")
    for key, tol in cfg["tolerances"].items():
        if not (isinstance(tol, (int, float)) and tol > 0):
            raise ConfigError(f"tolerance {key} must be positive")
    for key in ("dt", "horizon"):
        if not cfg["flow"][key] > 0 or not cfg["convergence"][key] > 0:
            raise ConfigError(f"{key} must be positive")
    if not cfg["connect"]["kappa"] > 0:
        raise ConfigError("kappa must be positive")
    return cfg


def build_group(cfg: dict) -> Group:
    g = cfg["group"]
    try:
        return make_group(g["kind"], int(g["n_modes"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def vector_from(group: Group, values, modes, name: str, default=None) -> np.ndarray:
    if values is not None and modes is not None:
        raise ConfigError(f"give either {name} or {name}_modes, not both")
    if modes is not None:
        if group.kind != "DiffS1":
            raise ConfigError(f"{name}_modes is only meaningful for DiffS1")
        out = np.zeros(group.dim)
        for entry in modes:
            k, a, b = entry
            out += group.basis.mode(int(k), float(a), float(b))
        return out
    if values is None:
        return np.zeros(group.dim) if default is None else np.asarray(default, dtype=float)
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.size != group.dim:
        raise ConfigError(f"{name} needs {group.dim} entries, got {arr.size}")
    return arr


def build_spec(cfg: dict, group: Group | None = None) -> LagrangianSpec:
    group = build_group(cfg) if group is None else group
    g = cfg["group"]
    lag = cfg["lagrangian"]
    try:
        A = InertiaOperator(group, s=float(g["s"]), inertia=g["inertia"], mass=float(g["mass"]))
        theta = vector_from(group, lag["theta"], lag["theta_modes"], "theta")
        return LagrangianSpec(A, theta=theta, V0=float(lag["V0"]),
                              potential_sign=lag["potential_sign"],
                              perturbation=float(lag["perturbation"]))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def element_from(group: Group, values, modes, name: str) -> GroupElement:
    """U1: angle; SO3: rotation vector; DiffS1: displacement coefficients or modes."""
    if values is None and modes is None:
        return group.identity()
    v = vector_from(group, values, modes, name)
    if group.kind == "U1":
        return group.element(v[0])
    if group.kind == "SO3":
        return group.exp(v)
    return group.element(v)


def stock_specs() -> dict:
    """Named specs used by the acceptance suite and the CLI examples."""
    u1, so3, diff = make_group("U1"), make_group("SO3"), make_group("DiffS1", 64)
    inertia = [1.0, 2.0, 3.0]
    return {
        "u1-kinetic": LagrangianSpec(InertiaOperator(u1)),
        "u1-magnetic": LagrangianSpec(InertiaOperator(u1), theta=[0.7]),
        "u1-potential": LagrangianSpec(InertiaOperator(u1), V0=2.0),
        "so3-kinetic": LagrangianSpec(InertiaOperator(so3, inertia=inertia)),
        "so3-magnetic": LagrangianSpec(InertiaOperator(so3, inertia=inertia),
                                       theta=[0.3, -0.2, 0.5]),
        "diffs1-kinetic": LagrangianSpec(InertiaOperator(diff, s=2.0)),
        "diffs1-magnetic": LagrangianSpec(InertiaOperator(diff, s=2.0),
                                          theta=diff.basis.mode(1, 0.2, -0.1)
                                          + diff.basis.constant(0.1), V0=0.5),
    }


MANE_SCENARIOS = ("u1-kinetic", "u1-magnetic", "u1-potential", "so3-kinetic", "so3-magnetic")
