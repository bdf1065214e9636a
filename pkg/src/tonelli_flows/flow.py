"""Reduced Euler-Poincare dynamics with group reconstruction.

The state is the momentum ``m = D_v L(e, u)`` together with the lift of the
group element.  Each RK4 stage recovers ``u`` by the inverse Legendre
transform, advances ``m' = ad*_u m`` and moves the group by ``x' = u x``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .groups import GroupElement
from .lagrangian import LagrangianSpec, fiber_derivative, legendre_inverse, energy
from .metric import ad, ad_star


class BlowUp(RuntimeError):
    """Non-finite state during integration; carries the last valid state."""

    def __init__(self, msg, last_state=None):
        super().__init__(msg)
        self.last_state = last_state


@dataclass(frozen=True, eq=False)
class FlowState:
    """Group lift, velocity, momentum and time.

    The group element is rebuilt from the lift on access: the lift (node
    positions for DiffS1) stays exact even when a strongly compressed map is
    no longer representable with N modes.
    """

    group: object = field(repr=False)
    lift: np.ndarray = field(repr=False)
    u: np.ndarray
    m: np.ndarray
    t: float = 0.0

    @property
    def x(self) -> GroupElement:
        return self.group.from_lift(self.lift)

    @classmethod
    def initial(cls, spec: LagrangianSpec, u0, x0: GroupElement | None = None, t: float = 0.0):
        g = spec.group
        x0 = g.identity() if x0 is None else x0
        u0 = np.asarray(u0, dtype=float).reshape(g.dim)
        return cls(group=g, lift=g.to_lift(x0), u=u0, m=fiber_derivative(spec, u0), t=t)


@dataclass
class FlowDiagnostics:
    times: np.ndarray
    energy: np.ndarray
    casimir: np.ndarray
    speed: np.ndarray
    sobolev: np.ndarray
    step_sizes: np.ndarray
    u: np.ndarray
    sobolev_order: float
    energy_drift: float
    max_speed: float
    speed_bound: float | None = None
    basis: object = field(default=None, repr=False)

    @property
    def casimir_drift(self) -> float:
        c = self.casimir
        if not np.all(np.isfinite(c)):
            return float("nan")
        return float(np.max(np.abs(c - c[0])) / max(abs(c[0]), 1e-300))

    @property
    def speed_bound_ok(self) -> bool:
        return self.speed_bound is None or self.max_speed <= self.speed_bound


def ep_rhs(spec: LagrangianSpec, u):
    """``d/dt (dl/du) = ad*_u (dl/du)``."""
    return ad_star(spec.group, u, fiber_derivative(spec, u))


def magnetic_form(spec: LagrangianSpec, u, v):
    """The two-form ``beta(u, v) = <theta, ad_u v>`` induced at the identity by theta."""
    return float(np.dot(spec.theta, ad(spec.group, u, v)))


def lorentz_force(spec: LagrangianSpec, u):
    """``Y(u)`` with ``G(Y(u), v) = beta(u, v)`` for all ``v``."""
    return spec.inertia.solve(ad_star(spec.group, u, spec.theta))


def em_epdiff_rhs(spec: LagrangianSpec, u, forcing=None):
    """Rate of the momentum density ``A u`` for an electromagnetic Lagrangian.

    ``(A u)' = ad*_u (A u) - A Y(u) - F(u)`` where ``F`` is the optional
    potential-force hook (a callable returning a covector); it defaults to
    zero because a right-invariant potential is constant.
    """
    if not spec.is_electromagnetic:
        raise ValueError("electromagnetic form requires an unperturbed Lagrangian")
    A = spec.inertia
    rate = ad_star(spec.group, u, A.apply(u)) - A.apply(lorentz_force(spec, u))
    if forcing is not None:
        rate = rate - np.asarray(forcing(u), dtype=float)
    return rate


def _speed_bound(spec, E0, growth):
    if growth is None:
        return None
    m_hat, b_hat = growth
    return float(np.sqrt(max(4.0 * (E0 + b_hat) / m_hat, 0.0)))


def integrate(spec: LagrangianSpec, state0: FlowState, horizon: float, dt: float = 1e-3,
              forcing=None, growth=None, adaptive: bool = False, adapt_tol: float = 1e-8,
              max_records: int = 2001, keep_states: bool = True):
    """Integrate the reduced flow with fixed-step RK4.

    ``growth=(m_hat, b_hat)`` enables the a-priori speed bound
    ``|u|_G <= sqrt(4 (E0 + b) / m)`` in the diagnostics.  With ``adaptive``
    a step whose energy error exceeds ``adapt_tol`` (relative) is retried as
    two half steps, recursively up to six times.

    Returns ``(states, diagnostics)`` sampled at up to ``max_records`` times.
    """
    if not horizon > 0 or not dt > 0:
        raise ValueError("horizon and dt must be positive")
    g = spec.group
    A = spec.inertia
    n_steps = max(1, int(np.ceil(horizon / dt - 1e-9)))
    h = horizon / n_steps
    every = max(1, int(np.ceil(n_steps / (max_records - 1))))
    basis = getattr(g, "basis", None)
    sob_order = A.s + 1.0

    def rhs(m, lift):
        u = legendre_inverse(spec, m)
        dm = ad_star(g, u, m)
        if forcing is not None:
            dm = dm - np.asarray(forcing(u), dtype=float)
        return dm, g.lift_rhs(lift, u)

    def step(m, lift, hh):
        k1m, k1l = rhs(m, lift)
        k2m, k2l = rhs(m + 0.5 * hh * k1m, lift + 0.5 * hh * k1l)
        k3m, k3l = rhs(m + 0.5 * hh * k2m, lift + 0.5 * hh * k2l)
        k4m, k4l = rhs(m + hh * k3m, lift + hh * k3l)
        m_new = m + hh / 6.0 * (k1m + 2 * k2m + 2 * k3m + k4m)
        l_new = g.lift_post(lift + hh / 6.0 * (k1l + 2 * k2l + 2 * k3l + k4l))
        return m_new, l_new

    def adaptive_step(m, lift, hh, E_old, depth=0):
        m1, l1 = step(m, lift, hh)
        if depth >= 6:
            return m1, l1, [hh]
        E1 = float(energy(spec, legendre_inverse(spec, m1)))
        if abs(E1 - E_old) <= adapt_tol * max(1.0, abs(E_old)):
            return m1, l1, [hh]
        ma, la, ha = adaptive_step(m, lift, 0.5 * hh, E_old, depth + 1)
        mb, lb, hb = adaptive_step(ma, la, 0.5 * hh, E_old, depth + 1)
        return mb, lb, ha + hb

    m = np.array(state0.m, dtype=float)
    lift = np.array(state0.lift, dtype=float)
    t0 = state0.t
    u = legendre_inverse(spec, m)
    E0 = float(energy(spec, u))
    bound = _speed_bound(spec, E0, growth)

    rec_t, rec_E, rec_C, rec_S, rec_H, rec_u, rec_h = [], [], [], [], [], [], []
    states = []
    max_drift = 0.0
    max_speed = float(A.norm(u))
    last_state = state0

    def record(t, u, m, lift, hh):
        rec_t.append(t)
        rec_E.append(float(energy(spec, u)))
        rec_C.append(float(np.linalg.norm(m)) if g.kind == "SO3" else np.nan)
        rec_S.append(float(A.norm(u)))
        rec_H.append(float(basis.sobolev_norm(u, sob_order)) if basis is not None
                     else float(np.linalg.norm(u)))
        rec_u.append(u.copy())
        rec_h.append(hh)
        if keep_states:
            states.append(FlowState(group=g, lift=lift.copy(), u=u.copy(), m=m.copy(), t=t))

    record(t0, u, m, lift, h)
    for n in range(1, n_steps + 1):
        if adaptive:
            m_new, l_new, hs = adaptive_step(m, lift, h, E0)
            hh = min(hs)
        else:
            m_new, l_new = step(m, lift, h)
            hh = h
        if not (np.all(np.isfinite(m_new)) and np.all(np.isfinite(l_new))):
            raise BlowUp(f"non-finite state at t = {t0 + n * h:.6g}", last_state)
        m, lift = m_new, l_new
        u = legendre_inverse(spec, m)
        E = float(energy(spec, u))
        max_drift = max(max_drift, abs(E - E0))
        max_speed = max(max_speed, float(A.norm(u)))
        t = t0 + n * h
        if n % every == 0 or n == n_steps:
            record(t, u, m, lift, hh)
            last_state = states[-1] if keep_states else last_state

    drift = max_drift / abs(E0) if abs(E0) > 0 else max_drift
    diag = FlowDiagnostics(
        times=np.array(rec_t), energy=np.array(rec_E), casimir=np.array(rec_C),
        speed=np.array(rec_S), sobolev=np.array(rec_H), step_sizes=np.array(rec_h),
        u=np.array(rec_u), sobolev_order=sob_order, energy_drift=float(drift),
        max_speed=max_speed, speed_bound=bound, basis=basis)
    if not keep_states:
        states = [FlowState(group=g, lift=lift, u=u, m=m, t=t0 + horizon)]
    return states, diag


@dataclass(frozen=True)
class RegularityReport:
    order: float
    norms: np.ndarray
    ratio: float
    ceiling: float
    flagged: bool


def regularity_monitor(diag: FlowDiagnostics, order_shift: float = 1.0,
                       ceiling: float = 10.0) -> RegularityReport:
    """Track ``|u(t)|_{H^{s + shift}}`` (s = inertia order) and its max/initial ratio."""
    if diag.basis is None:
        raise ValueError("regularity monitoring needs a DiffS1 flow")
    order = diag.sobolev_order - 1.0 + order_shift
    norms = diag.basis.sobolev_norm(diag.u, order)
    n0 = norms[0]
    if n0 == 0.0:
        ratio = 1.0 if np.all(norms == 0.0) else float("inf")
    else:
        ratio = float(np.max(norms) / n0)
    return RegularityReport(order=order, norms=norms, ratio=ratio, ceiling=ceiling,
                            flagged=bool(ratio > ceiling))


def band_leakage(diag: FlowDiagnostics, band: int, t_max: float) -> float:
    """Largest coefficient magnitude above wavenumber ``band`` for ``t <= t_max``."""
    k = diag.basis.wavenumbers
    sel = diag.times <= t_max + 1e-12
    return float(np.max(np.abs(diag.u[sel][:, k > band]), initial=0.0))


def self_convergence_order(spec: LagrangianSpec, u0, horizon: float, dt: float):
    """Observed temporal order from runs at ``dt``, ``dt/2``, ``dt/4``."""
    finals = []
    for k in range(3):
        states, _ = integrate(spec, FlowState.initial(spec, u0), horizon, dt / 2**k,
                              max_records=2, keep_states=False)
        finals.append(states[-1].u)
    e1 = np.linalg.norm(finals[0] - finals[1])
    e2 = np.linalg.norm(finals[1] - finals[2])
    return float(np.log2(e1 / e2)), float(e1), float(e2)
