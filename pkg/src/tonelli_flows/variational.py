"""Free-period action on right-trivialized paths and connecting minimizers.

A path is a set of uniform node values ``xi(s)``, ``s in [0, 1]``, and a period
``T``; the physical velocity is ``u(sT) = xi(s) / T`` and the group path solves
``dg/ds = xi(s) g``.  The action

    S(xi, T) = T * int_0^1 ( L(e, xi(s) / T) + kappa ) ds

is discretized with the trapezoid rule, and the terminal constraint
``g(1) = q p^{-1}`` is imposed on the lifted evolution, so a topological class
(winding, quaternion sheet) can be prescribed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares, minimize

from .groups import GroupElement, TWO_PI
from .lagrangian import LagrangianSpec, eval_L, energy, fiber_derivative, legendre_inverse
from .metric import ad_star


class DegenerateEndpoints(ValueError):
    """``p == q``: the free-period infimum may only be approached as ``T -> 0``."""


class NotConverged(RuntimeError):
    """Solver stopped without meeting its tolerances; ``report`` holds the best iterate."""

    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report


@dataclass(frozen=True, eq=False)
class DiscretizedPath:
    xi: np.ndarray
    T: float
    interp: str = "linear"

    def __post_init__(self):
        xi = np.array(self.xi, dtype=float)
        if xi.ndim == 1:
            xi = xi[:, None]
        if xi.ndim != 2 or xi.shape[0] < 8:
            raise ValueError("path needs at least 8 nodes of shape (N_t, dim)")
        if not np.all(np.isfinite(xi)):
            raise ValueError("path nodes must be finite")
        if not (np.isfinite(self.T) and self.T > 0):
            raise ValueError("period T must be positive")
        xi.setflags(write=False)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "T", float(self.T))

    @property
    def n_nodes(self) -> int:
        return self.xi.shape[0]

    @property
    def velocities(self) -> np.ndarray:
        return self.xi / self.T

    @classmethod
    def constant(cls, xi0, T, n_nodes: int = 33):
        xi0 = np.atleast_1d(np.asarray(xi0, dtype=float))
        return cls(np.tile(xi0, (n_nodes, 1)), T)

    def resample(self, n_nodes: int) -> "DiscretizedPath":
        s_old = np.linspace(0.0, 1.0, self.n_nodes)
        s_new = np.linspace(0.0, 1.0, n_nodes)
        xi = np.stack([np.interp(s_new, s_old, col) for col in self.xi.T], axis=1)
        return DiscretizedPath(xi, self.T)


@dataclass
class MinimizerReport:
    path: DiscretizedPath
    action: float
    constraint_defect: float
    el_residual: float
    energy_defect: float
    iterations: int
    converged: bool
    winding: int | None = None
    polished: bool = False
    starts: list = field(default_factory=list)

    @property
    def T(self) -> float:
        return self.path.T


@dataclass(frozen=True)
class ConnectOptions:
    n_nodes: int = 33
    starts: int = 4
    max_outer: int = 20
    penalty0: float = 10.0
    penalty_growth: float = 10.0
    penalty_max: float = 1e8
    inner_maxiter: int = 2000
    tol_constraint: float = 1e-8
    tol_el: float = 1e-6
    tol_energy: float = 1e-4
    dt: float = 1e-3
    polish: bool = True
    polish_steps: int = 512
    perturbation: float = 0.05
    seed: int = 0
    strict: bool = True
    windings: tuple | None = None


def trapezoid_weights(n: int) -> np.ndarray:
    w = np.full(n, 1.0 / (n - 1))
    w[0] = w[-1] = 0.5 / (n - 1)
    return w


# -- the functional -----------------------------------------------------------
def action(spec: LagrangianSpec, path: DiscretizedPath, kappa: float) -> float:
    T = path.T
    if not T > 0:
        raise ValueError("period T must be positive")
    w = trapezoid_weights(path.n_nodes)
    return float(T * np.dot(w, eval_L(spec, path.xi / T) + kappa))


def action_gradient(spec: LagrangianSpec, path: DiscretizedPath, kappa: float,
                    riesz: bool = True):
    """``(grad_xi, dS/dT)``.

    ``grad_xi`` is the Riesz representative of ``dS`` in the discrete L2 inner
    product ``sum_i w_i <a_i, b_i>`` (plain partial derivatives when
    ``riesz=False``).  ``dS/dT = sum_i w_i (kappa - E(xi_i / T))``.
    """
    T = path.T
    w = trapezoid_weights(path.n_nodes)
    u = path.xi / T
    p = fiber_derivative(spec, u)
    dT = float(np.dot(w, kappa - energy(spec, u)))
    grad = p if riesz else w[:, None] * p
    return grad, dT


def mean_action(spec: LagrangianSpec, path: DiscretizedPath) -> float:
    """``(1 / T) int_0^T L dt``, i.e. the average of ``L(e, xi / T)`` over ``s``."""
    w = trapezoid_weights(path.n_nodes)
    return float(np.dot(w, eval_L(spec, path.xi / path.T)))


def _fd4_weights(n):
    """Fourth-order first-derivative matrix on ``n >= 5`` uniform nodes (unit spacing)."""
    D = np.zeros((n, n))
    for i in range(n):
        j0 = min(max(i - 2, 0), n - 5)
        x = np.arange(j0, j0 + 5) - i
        # weights from the Vandermonde system sum_j c_j x_j^k = delta_{k1}
        V = np.vander(x, 5, increasing=True).T
        rhs = np.zeros(5)
        rhs[1] = 1.0
        D[i, j0:j0 + 5] = np.linalg.solve(V, rhs)
    return D


def el_residual(spec: LagrangianSpec, path: DiscretizedPath) -> float:
    """Max over nodes of ``| d/dt m - ad*_u m |`` with ``m = D_v L(e, u)``."""
    n = path.n_nodes
    u = path.velocities
    m = fiber_derivative(spec, u)
    ds = 1.0 / (n - 1)
    # differencing m - m[0] keeps constant momenta exactly stationary
    dm_dt = _fd4_weights(n) @ (m - m[0]) / (ds * path.T)
    res = dm_dt - ad_star(spec.group, u, m)
    return float(np.max(np.linalg.norm(res, axis=1)))


def energy_defect(spec: LagrangianSpec, path: DiscretizedPath, kappa: float) -> float:
    return float(np.max(np.abs(energy(spec, path.velocities) - kappa)))


# -- terminal constraint ------------------------------------------------------
class _Terminal:
    """Lifted evolution defect ``evol(xi) ~ target`` with a fixed class."""

    def __init__(self, group, target: GroupElement, winding, dt):
        self.g = group
        self.target = target
        self.winding = winding
        self.dt = dt
        self.lift0 = group.to_lift(group.identity())

    def value(self, xi, interp="linear"):
        end = self.g.evolve_lift(self.lift0, xi, 1.0, dt=self.dt, interp=interp)[..., -1, :]
        return np.asarray(self.g.lift_defect(end, self.target, self.winding), dtype=float)

    def jacobian(self, xi):
        n, d = xi.shape
        if self.g.kind == "U1":
            return trapezoid_weights(n)[None, :]
        h = 1e-6 * max(1.0, float(np.max(np.abs(xi))))
        if self.g.rhs_matrix is not None:
            ends = self.g.perturbed_ends(self.lift0, xi, 1.0, self.dt, h)
            vals = np.asarray(self.g.lift_defect(ends, self.target, self.winding))
            return ((vals[0] - vals[1]) / (2 * h)).reshape(n * d, -1).T
        if hasattr(self.g, "evolve_tangent"):
            # the DiffS1 defect is linear in the lift: project the tangent columns
            _, Jl = self.g.evolve_tangent(xi, 1.0, self.dt)
            cols = np.moveaxis(Jl.reshape(Jl.shape[0], n * d), 0, -1)
            return self.g.basis.from_grid(cols).T
        E = np.eye(n * d).reshape(n * d, n, d) * h
        vals = self.value(np.concatenate([xi[None] + E, xi[None] - E]))
        return ((vals[: n * d] - vals[n * d:]) / (2 * h)).T

    def end_lift(self, xi, interp="linear"):
        return self.g.evolve_lift(self.lift0, xi, 1.0, dt=self.dt, interp=interp)[-1]


# -- augmented Lagrangian core -------------------------------------------------
def _al_minimize(objective, terminal: _Terminal, xi0, T0, T_bounds, opts: ConnectOptions,
                 scale=None):
    """Minimize ``objective(xi, T) -> (val, grad_xi, dT)`` subject to the terminal defect.

    Variables are the flattened nodes multiplied by ``scale`` (square roots
    of the inertia symbol whiten the kinetic Hessian) and ``log T``; the
    inner problem is solved by L-BFGS-B with box bounds on ``log T`` only.
    """
    n, d = xi0.shape
    scale = np.ones(d) if scale is None else np.asarray(scale, dtype=float)
    sflat = np.tile(scale, n)
    lam = np.zeros(terminal.value(xi0).size)
    mu = opts.penalty0
    z = np.concatenate([xi0.ravel() * sflat, [np.log(T0)]])
    bounds = [(None, None)] * (n * d) + [tuple(np.log(T_bounds))]
    cache = {}

    def nodes(x):
        return (x[:-1] / sflat).reshape(n, d)

    def constraint(x):
        key = x.tobytes()
        if key not in cache:
            cache.clear()
            xi = nodes(x)
            cache[key] = (terminal.value(xi), terminal.jacobian(xi))
        return cache[key]

    def f(x):
        xi = nodes(x)
        T = np.exp(x[-1])
        val, gxi, dT = objective(xi, T)
        c, J = constraint(x)
        val = val + lam @ c + 0.5 * mu * c @ c
        gxi = gxi.ravel() + J.T @ (lam + mu * c)
        return val, np.concatenate([gxi / sflat, [dT * T]])

    iters = 0
    prev = np.inf
    cnorm = np.inf
    for outer in range(opts.max_outer):
        res = minimize(f, z, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": opts.inner_maxiter, "ftol": 1e-15, "gtol": 1e-11,
                                "maxcor": 30})
        z = res.x
        iters += int(res.nit)
        c, _ = constraint(z)
        cnorm = float(np.linalg.norm(c))
        lam = lam + mu * c
        if cnorm <= 0.1 * opts.tol_constraint:
            break
        if cnorm > 0.25 * prev:
            mu = min(mu * opts.penalty_growth, opts.penalty_max)
        prev = cnorm
    # minimum-norm Newton corrections onto the constraint: small defects would
    # otherwise be amplified by 1/T in mean-action objectives
    xi = nodes(z)
    for _ in range(3):
        c = terminal.value(xi)
        if np.linalg.norm(c) <= 1e-14:
            break
        J = terminal.jacobian(xi)
        step = np.linalg.lstsq(J, c.ravel(), rcond=None)[0]
        trial = xi - step.reshape(n, d)
        if np.linalg.norm(terminal.value(trial)) >= np.linalg.norm(c):
            break
        xi = trial
    cnorm = float(np.linalg.norm(terminal.value(xi)))
    return xi, float(np.exp(z[-1])), cnorm, iters


# -- shooting polish -----------------------------------------------------------
def _shoot(spec: LagrangianSpec, u0, T, n_steps, record=False):
    """RK4 of the reduced flow in rescaled time ``s``; batched over leading axes."""
    g = spec.group
    u0 = np.asarray(u0, dtype=float)
    T = np.asarray(T, dtype=float)[..., None]
    m = fiber_derivative(spec, u0)
    lift = np.broadcast_to(g.to_lift(g.identity()), u0.shape[:-1] + (g.lift_dim,)).copy()
    h = 1.0 / n_steps

    def rhs(m, lift):
        u = legendre_inverse(spec, m)
        return T * ad_star(g, u, m), g.lift_rhs(lift, T * u)

    ms = [m]
    for _ in range(n_steps):
        k1 = rhs(m, lift)
        k2 = rhs(m + 0.5 * h * k1[0], lift + 0.5 * h * k1[1])
        k3 = rhs(m + 0.5 * h * k2[0], lift + 0.5 * h * k2[1])
        k4 = rhs(m + h * k3[0], lift + h * k3[1])
        m = m + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        lift = g.lift_post(lift + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]))
        if record:
            ms.append(m)
    if record:
        return np.stack(ms, axis=-2), lift
    return m, lift


def _polish(spec, terminal: _Terminal, kappa, path: DiscretizedPath, n_steps):
    """Shooting on ``(u0, T)``: hit the target in the same class with energy ``kappa``."""
    d = spec.dim
    g = spec.group

    def residual_batch(Z):
        u0 = Z[..., :d]
        T = np.exp(Z[..., d])
        _, lift = _shoot(spec, u0, T, n_steps)
        c = np.asarray(g.lift_defect(lift, terminal.target, terminal.winding))
        e = energy(spec, u0) - kappa
        return np.concatenate([c, np.asarray(e)[..., None]], axis=-1)

    def jac(z):
        h = 1e-7 * np.maximum(1.0, np.abs(z))
        E = np.diag(h)
        R = residual_batch(np.concatenate([z + E, z - E]))
        k = z.size
        return ((R[:k] - R[k:]) / (2 * h[:, None])).T

    z0 = np.concatenate([path.xi[0] / path.T, [np.log(path.T)]])
    try:
        sol = least_squares(lambda z: residual_batch(z), z0, jac=jac, method="lm",
                            xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=200)
    except (ValueError, FloatingPointError, ArithmeticError):
        return None
    if not np.all(np.isfinite(sol.x)) or np.max(np.abs(sol.fun)) > 1e-10:
        return None
    u0, T = sol.x[:d], float(np.exp(sol.x[d]))
    ms, _ = _shoot(spec, u0, T, n_steps, record=True)
    xi = T * legendre_inverse(spec, ms)
    return DiscretizedPath(xi, T, interp="cubic")


# -- starts --------------------------------------------------------------------
def _class_candidates(group, target: GroupElement, windings=None):
    """Candidate classes and a constant-velocity guess reaching each."""
    if group.kind == "U1":
        a = float(target.data[0])
        ns = windings if windings is not None else (0, -1, 1)
        return [(int(n), np.array([a + TWO_PI * n])) for n in ns]
    if group.kind == "SO3":
        q = target.data
        v = group.log(target)
        ang = np.linalg.norm(v)
        axis = v / ang if ang > 0 else np.array([0.0, 0.0, 1.0])
        # exp(v) = +q or -q depending on the sign convention of the stored quaternion
        s_short = 1.0 if np.dot(group.exp(v).data, q) > 0 else -1.0
        cls_short = 0 if s_short > 0 else 1
        long_v = axis * (ang - TWO_PI)
        out = [(cls_short, v), (1 - cls_short, long_v)]
        if windings is not None:
            out = [o for o in out if o[0] in windings]
        return out
    # DiffS1: displacement as the velocity guess, windings shift the mean
    d = group.log(target)
    ns = windings if windings is not None else (0,)
    out = []
    for n in ns:
        v = d.copy()
        v[0] += TWO_PI * n * np.sqrt(TWO_PI)
        out.append((int(n), v))
    return out


def connect(spec: LagrangianSpec, p: GroupElement, q: GroupElement, kappa: float,
            opts: ConnectOptions | None = None) -> MinimizerReport:
    """Minimize the free-period action over paths from ``p`` to ``q``.

    Starts are constant-velocity paths into each candidate class, perturbed
    for the extra multistarts; the lowest-action result wins.  With
    ``opts.polish`` the winner is refined by shooting to an exact solution of
    the reduced equations with energy ``kappa``.
    """
    opts = opts or ConnectOptions()
    g = spec.group
    target = g.compose(q, g.inverse(p))
    dist = g.distance(p, q)
    if dist < 1e-12 and opts.windings is None:
        raise DegenerateEndpoints("endpoints coincide; the infimum is not attained")
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    rng = np.random.default_rng(opts.seed)
    n = opts.n_nodes
    T_ref = max(dist, 1e-6) / np.sqrt(2 * kappa)
    T_bounds = (1e-3 * T_ref, 1e3 * T_ref)

    def objective(xi, T):
        path = DiscretizedPath(xi, T)
        val = action(spec, path, kappa)
        gxi, dT = action_gradient(spec, path, kappa, riesz=False)
        return val, gxi, dT

    candidates = _class_candidates(g, target, opts.windings)
    best = None
    trail = []
    for k in range(max(opts.starts, len(candidates))):
        cls, v = candidates[k % len(candidates)]
        xi0 = np.tile(v, (n, 1))
        if k >= len(candidates):
            bump = np.sin(np.pi * np.linspace(0, 1, n))[:, None]
            xi0 = xi0 + opts.perturbation * bump * rng.standard_normal(v.size) * max(1.0, np.linalg.norm(v))
        speed = np.sqrt(max(float(spec.inertia.inner(v, v)), 1e-12))
        T0 = float(np.clip(speed / np.sqrt(2 * kappa), *T_bounds))
        terminal = _Terminal(g, target, cls, opts.dt)
        try:
            xi, T, cnorm, iters = _al_minimize(objective, terminal, xi0, T0, T_bounds, opts,
                                               scale=np.sqrt(spec.inertia.symbol))
        except (ValueError, ArithmeticError) as exc:
            trail.append({"class": cls, "error": str(exc)})
            continue
        path = DiscretizedPath(xi, T)
        S = action(spec, path, kappa)
        trail.append({"class": cls, "action": S, "T": T, "constraint": cnorm})
        if best is None or S < best[0] - 1e-12:
            best = (S, path, terminal, iters)
    if best is None:
        raise NotConverged("every start failed", None)
    S, path, terminal, iters = best
    polished = False
    if opts.polish:
        cand = _polish(spec, terminal, kappa, path, opts.polish_steps)
        if cand is not None and abs(cand.T - path.T) <= 0.05 * path.T:
            path, polished = cand, True
    report = _report(spec, terminal, kappa, path, iters, opts, polished, trail)
    if not report.converged and opts.strict:
        raise NotConverged("connecting minimizer did not meet tolerances", report)
    return report


def _report(spec, terminal, kappa, path, iters, opts, polished, trail):
    c = terminal.value(path.xi, interp=path.interp)
    cdef = float(np.linalg.norm(c))
    el = el_residual(spec, path)
    en = energy_defect(spec, path, kappa)
    ok = cdef <= opts.tol_constraint and el <= opts.tol_el and en <= opts.tol_energy
    return MinimizerReport(path=path, action=action(spec, path, kappa), constraint_defect=cdef,
                           el_residual=el, energy_defect=en, iterations=iters, converged=ok,
                           winding=terminal.winding, polished=polished, starts=trail)
