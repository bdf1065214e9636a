"""Mane critical values from minimal mean action over closed loops.

For a loop class ``C`` the estimate is ``-inf (1/T) int_0^T L dt`` over
trivialized loops ``(xi, T)`` whose lifted evolution closes in ``C``:

* U1 / DiffS1: winding number ``n`` (rotation number of the k = 0 mode);
* SO3: sheet of the quaternion lift, ``0`` (closes on +1, contractible) or ``1``.

``contractible`` and ``null-homologous`` both use class 0 (the fundamental
groups here are abelian, so the two notions agree); ``any`` takes the best
class among the representatives searched, which makes the class ordering hold
exactly by construction.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .groups import TWO_PI
from .lagrangian import LagrangianSpec, energy, eval_L, fiber_derivative
from .variational import (ConnectOptions, DiscretizedPath, _al_minimize, _Terminal,
                          mean_action, trapezoid_weights)

TOPO_CLASSES = ("any", "null-homologous", "contractible")


class ChainViolation(AssertionError):
    """The ordering ``min E <= e0 <= c_u <= c_0 <= c`` failed beyond the slack."""

    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report


@dataclass(frozen=True)
class ManeOptions:
    n_nodes: int = 17
    max_winding: int = 5
    T_min: float = 1e-3
    T_max: float = 1e4
    tol_closure: float = 1e-8
    al: ConnectOptions = field(default_factory=lambda: ConnectOptions(max_outer=20))


@dataclass
class ManeEstimate:
    value: float
    topo_class: str
    loop: DiscretizedPath | None
    mean_action: float
    converged: bool
    winding: int | None = None
    closure_defect: float = 0.0
    per_class: dict = field(default_factory=dict)

    @property
    def T(self):
        return None if self.loop is None else self.loop.T


def e0(spec: LagrangianSpec) -> float:
    """``max_x E(x, 0)``; constant in ``x`` by right-invariance."""
    return float(energy(spec, np.zeros(spec.dim)))


def min_energy(spec: LagrangianSpec) -> float:
    """``min E`` over the tangent bundle.

    Along any ray ``d/dt E(t v) = <Hess L(t v) t v, v> > 0`` for a Tonelli
    Lagrangian, so the fiber minimum sits at the zero section.
    """
    return e0(spec)


def _classes(group, topo_class, max_winding):
    if topo_class not in TOPO_CLASSES:
        raise ValueError(f"topological class must be one of {TOPO_CLASSES}")
    if topo_class != "any":
        return [0]
    if group.kind == "SO3":
        return [0, 1]
    return [0] + [s * n for n in range(1, max_winding + 1) for s in (1, -1)]


def _starts(spec, cls, opts: ManeOptions):
    """Constant loops: rest, and drifting along ``A^{-1} theta`` when it closes in ``cls``."""
    g = spec.group
    A = spec.inertia
    drift = A.solve(spec.theta)
    out = []
    if g.kind == "SO3":
        speed = np.linalg.norm(drift)
        axis = drift / speed if speed > 0 else np.array([0.0, 0.0, 1.0])
        angle = 2 * TWO_PI if cls == 0 else TWO_PI
        T = angle / speed if speed > 0 else opts.T_max / 10
        if cls == 0:
            out.append((np.zeros(3), 1.0))
        out.append((angle * axis, T))
        return out
    if g.kind == "U1":
        if cls == 0:
            return [(np.zeros(1), 1.0)]
        s = float(drift[0])
        T = TWO_PI * cls / s if s * cls > 0 else opts.T_max / 10
        return [(np.array([TWO_PI * cls]), T)]
    # DiffS1: rigid rotations carry the winding
    if cls == 0:
        return [(np.zeros(g.dim), 1.0)]
    rot = g.basis.constant(TWO_PI * cls)
    mean_drift = g.basis.mean(drift)
    T = TWO_PI * cls / mean_drift if mean_drift * cls > 0 else opts.T_max / 10
    return [(rot, T)]


def _class_minimum(spec, cls, opts: ManeOptions):
    g = spec.group
    n = opts.n_nodes
    w = trapezoid_weights(n)

    def objective(xi, T):
        u = xi / T
        p = fiber_derivative(spec, u)
        val = float(np.dot(w, eval_L(spec, u)))
        gxi = w[:, None] * p / T
        dT = -float(np.dot(w, np.sum(p * xi, axis=1))) / T**2
        return val, gxi, dT

    terminal = _Terminal(g, g.identity(), cls, opts.al.dt)
    best = None
    for xi_c, T0 in _starts(spec, cls, opts):
        xi0 = np.tile(xi_c, (n, 1))
        T0 = float(np.clip(T0, opts.T_min, opts.T_max))
        xi, T, cnorm, _ = _al_minimize(objective, terminal, xi0, T0, (opts.T_min, opts.T_max),
                                       opts.al, scale=np.sqrt(spec.inertia.symbol))
        loop = DiscretizedPath(xi, T)
        ma = mean_action(spec, loop)
        closure = float(np.linalg.norm(terminal.value(xi)))
        cand = (ma, loop, closure)
        if best is None or (closure <= opts.tol_closure and ma < best[0]) or \
                (best[2] > opts.tol_closure and closure < best[2]):
            best = cand
    return best


def estimate_c(spec: LagrangianSpec, topo_class: str = "any",
               opts: ManeOptions | None = None) -> ManeEstimate:
    """Estimate ``c`` (``any``), ``c_0`` (``null-homologous``) or ``c_u`` (``contractible``)."""
    opts = opts or ManeOptions()
    found = {cls: _class_minimum(spec, cls, opts)
             for cls in _classes(spec.group, topo_class, opts.max_winding)}
    return _merge(found, topo_class, opts)


def _merge(found, topo_class, opts, classes=None):
    classes = list(found) if classes is None else classes
    best = None
    for cls in classes:
        ma, loop, closure = found[cls]
        ok = closure <= opts.tol_closure
        if best is None or (ok and (not best[3] or ma < best[0])):
            best = (ma, loop, cls, ok, closure)
    ma, loop, cls, ok, closure = best
    per = {k: 0.0 - found[k][0] for k in classes}
    return ManeEstimate(value=0.0 - ma, topo_class=topo_class, loop=loop, mean_action=ma,
                        converged=bool(ok and np.all(np.isfinite(list(per.values())))),
                        winding=cls, closure_defect=closure, per_class=per)


def estimate_all(spec: LagrangianSpec, opts: ManeOptions | None = None) -> dict:
    """``c``, ``c_0``, ``c_u`` from one class search, plus ``e0`` and ``min E``."""
    opts = opts or ManeOptions()
    found = {cls: _class_minimum(spec, cls, opts)
             for cls in _classes(spec.group, "any", opts.max_winding)}
    return {"min_E": min_energy(spec), "e0": e0(spec),
            "c_u": _merge(found, "contractible", opts, [0]),
            "c_0": _merge(found, "null-homologous", opts, [0]),
            "c": _merge(found, "any", opts)}


@dataclass
class ChainReport:
    values: dict
    slack: float
    ok: bool
    violations: list

    def as_dict(self):
        return {"values": self.values, "slack": self.slack, "ok": self.ok,
                "violations": self.violations}


_CHAIN = ("min_E", "e0", "c_u", "c_0", "c")


def verify_chain(spec: LagrangianSpec, estimates: dict, slack: float = 1e-3,
                 raise_on_violation: bool = True) -> ChainReport:
    """Check ``min E <= e0 <= c_u <= c_0 <= c`` up to ``slack``.

    ``estimates`` maps ``c_u``, ``c_0``, ``c`` to :class:`ManeEstimate` or
    floats; ``min_E`` and ``e0`` are filled in from ``spec`` when absent.
    """
    vals = {"min_E": min_energy(spec), "e0": e0(spec)}
    for key in _CHAIN:
        if key in estimates:
            v = estimates[key]
            vals[key] = float(v.value if isinstance(v, ManeEstimate) else v)
    missing = [k for k in _CHAIN if k not in vals]
    if missing:
        raise ValueError(f"missing estimates: {missing}")
    violations = [f"{a} = {vals[a]:.6g} > {b} = {vals[b]:.6g}"
                  for a, b in zip(_CHAIN, _CHAIN[1:]) if vals[a] > vals[b] + slack]
    report = ChainReport(values=vals, slack=slack, ok=not violations, violations=violations)
    if violations and raise_on_violation:
        raise ChainViolation("; ".join(violations), report)
    return report
