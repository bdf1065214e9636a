"""Right-invariant Tonelli Lagrangians at the identity.

    L(e, v) = 1/2 <A v, v> - <theta, v> - sign * V0  (+ eps * P(v))

``sign = +1`` (``potential_sign="energy"``) makes the energy
``E = 1/2 |v|_G^2 + V0``; ``"lagrangian"`` flips it.  ``P`` is an optional
saturated quartic ``P(v) = q^2 / (4 (1 + q))``, ``q = <v, v>``: quartic near the
origin, quadratic at infinity, so its Hessian stays bounded and small
``|eps|`` keeps the Lagrangian Tonelli while large negative ``eps`` breaks
convexity.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metric import InertiaOperator


class NotTonelli(ValueError):
    """Fiber Hessian is not uniformly positive."""


class LegendreError(RuntimeError):
    """Newton iteration for the inverse Legendre transform failed."""


@dataclass(frozen=True, eq=False)
class LagrangianSpec:
    inertia: InertiaOperator
    theta: np.ndarray | None = None
    V0: float = 0.0
    potential_sign: str = "energy"
    perturbation: float = 0.0

    def __post_init__(self):
        dim = self.inertia.dim
        th = np.zeros(dim) if self.theta is None else np.array(self.theta, dtype=float).reshape(dim)
        th.setflags(write=False)
        object.__setattr__(self, "theta", th)
        if self.potential_sign not in ("energy", "lagrangian"):
            raise ValueError("potential_sign must be 'energy' or 'lagrangian'")

    @property
    def group(self):
        return self.inertia.group

    @property
    def dim(self):
        return self.inertia.dim

    @property
    def potential(self) -> float:
        """Signed constant subtracted from the kinetic part (so E(0) = potential)."""
        return self.V0 if self.potential_sign == "energy" else -self.V0

    @property
    def is_electromagnetic(self) -> bool:
        return self.perturbation == 0.0

    def replace(self, **kw) -> "LagrangianSpec":
        fields = dict(inertia=self.inertia, theta=self.theta, V0=self.V0,
                      potential_sign=self.potential_sign, perturbation=self.perturbation)
        fields.update(kw)
        return LagrangianSpec(**fields)


def _pert_parts(q):
    # P(q) = q^2 / (4 (1+q)); returns P, P', P''
    P = 0.25 * q * q / (1.0 + q)
    dP = 0.25 * (q * q + 2.0 * q) / (1.0 + q) ** 2
    d2P = 0.5 / (1.0 + q) ** 3
    return P, dP, d2P


def eval_L(spec: LagrangianSpec, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    val = 0.5 * spec.inertia.inner(v, v) - np.sum(spec.theta * v, axis=-1) - spec.potential
    if spec.perturbation:
        val = val + spec.perturbation * _pert_parts(np.sum(v * v, axis=-1))[0]
    return val


def fiber_derivative(spec: LagrangianSpec, v) -> np.ndarray:
    """Legendre transform ``p = D_v L(e, v)``."""
    v = np.asarray(v, dtype=float)
    p = spec.inertia.apply(v) - spec.theta
    if spec.perturbation:
        dP = _pert_parts(np.sum(v * v, axis=-1))[1]
        p = p + 2.0 * spec.perturbation * np.asarray(dP)[..., None] * v
    return p


def hessian_apply(spec: LagrangianSpec, v, w) -> np.ndarray:
    """Fiber Hessian at ``v`` applied to ``w`` (Euclidean pairing)."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    out = spec.inertia.apply(w)
    if spec.perturbation:
        _, dP, d2P = _pert_parts(np.sum(v * v, axis=-1))
        vw = np.sum(v * w, axis=-1)
        out = out + spec.perturbation * (2.0 * np.asarray(dP)[..., None] * w
                                         + 4.0 * np.asarray(d2P * vw)[..., None] * v)
    return out


def legendre_inverse(spec: LagrangianSpec, p, tol: float = 1e-12, maxiter: int = 50) -> np.ndarray:
    """Solve ``D_v L(e, v) = p`` for ``v``.

    Electromagnetic specs invert the diagonal inertia exactly; perturbed specs
    use Newton's method with the Hessian inverted by Sherman-Morrison.
    """
    p = np.asarray(p, dtype=float)
    rhs = p + spec.theta
    v = spec.inertia.solve(rhs)
    if not spec.perturbation:
        return v
    eps = spec.perturbation
    scale = max(1.0, float(np.max(np.abs(rhs))))
    for _ in range(maxiter):
        r = fiber_derivative(spec, v) - p
        if np.max(np.abs(r)) <= tol * scale:
            return v
        _, dP, d2P = _pert_parts(np.sum(v * v, axis=-1))
        diag = spec.inertia.symbol + 2.0 * eps * np.asarray(dP)[..., None]
        if np.any(diag <= 0):
            raise NotTonelli("fiber Hessian lost positivity during Newton solve")
        # (D + c v v^T)^{-1} r, c = 4 eps P''
        c = 4.0 * eps * np.asarray(d2P)[..., None]
        Dr = r / diag
        Dv = v / diag
        denom = 1.0 + c[..., 0] * np.sum(v * Dv, axis=-1)
        if np.any(denom <= 0):
            raise NotTonelli("fiber Hessian lost positivity during Newton solve")
        step = Dr - (c[..., 0] * np.sum(v * Dr, axis=-1) / denom)[..., None] * Dv
        v = v - step
    raise LegendreError(f"inverse Legendre transform did not converge in {maxiter} iterations")


def energy(spec: LagrangianSpec, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return np.sum(fiber_derivative(spec, v) * v, axis=-1) - eval_L(spec, v)


def hamiltonian(spec: LagrangianSpec, p) -> np.ndarray:
    return energy(spec, legendre_inverse(spec, p))


def _probe_directions(rng, dim, n_random, v=None):
    dirs = [rng.standard_normal((n_random, dim))]
    dirs.append(np.eye(dim))
    if v is not None and np.any(v):
        dirs.append(v[None, :])
    d = np.concatenate(dirs)
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def check_tonelli(spec: LagrangianSpec, sample_count: int = 200, directions: int = 20,
                  rng=None, max_speed: float = 100.0):
    """Estimate fiber Hessian bounds ``(m_hat, M_hat)`` by finite differences.

    Rayleigh quotients ``<H w, w> / <w, w>`` of central differences of the
    fiber derivative, along random directions, the coordinate axes and the
    base velocity itself, at base velocities of log-uniform magnitude.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.default_rng(0) if rng is None else rng
    dim = spec.dim
    lo, hi = np.inf, -np.inf
    for i in range(sample_count):
        if i == 0:
            v = np.zeros(dim)
        else:
            v = rng.standard_normal(dim)
            v *= 10.0 ** rng.uniform(-2.0, np.log10(max_speed)) / np.linalg.norm(v)
        W = _probe_directions(rng, dim, directions, v)
        h = 1e-4 * (1.0 + np.linalg.norm(v))
        dp = (fiber_derivative(spec, v + h * W) - fiber_derivative(spec, v - h * W)) / (2 * h)
        rq = np.sum(dp * W, axis=1)
        lo = min(lo, float(rq.min()))
        hi = max(hi, float(rq.max()))
    if lo <= 0:
        raise NotTonelli(f"estimated lower Hessian bound {lo:.3g} is not positive")
    return lo, hi


def _growth_violation(spec, m_hat, M_hat, v):
    L = eval_L(spec, v)
    n2 = spec.inertia.inner(v, v)
    return np.maximum(L - 0.25 * M_hat * n2, 0.25 * m_hat * n2 - L)


def check_growth(spec: LagrangianSpec, m_hat: float, M_hat: float, sample_count: int = 200,
                 radius: float = 1e3, rng=None) -> float:
    """Smallest ``b`` with ``M/4 |v|^2 + b >= L(v) >= m/4 |v|^2 - b`` on sampled rays.

    Norms are metric norms and the sample covers ``|v|_G <= radius``.  Along
    each probe direction the worst radius is located on a grid and refined
    with a bounded scalar search.  Probes include the metric gradient
    direction of ``L`` at the origin, where the linear term bites hardest.
    """
    from scipy.optimize import minimize_scalar

    rng = np.random.default_rng(1) if rng is None else rng
    dim = spec.dim
    dirs = _probe_directions(rng, dim, sample_count)
    g = spec.inertia.solve(spec.theta)
    if np.any(g):
        dirs = np.concatenate([dirs, (g / np.linalg.norm(g))[None], (-g / np.linalg.norm(g))[None]])
    dirs = np.concatenate([dirs, -dirs])
    dirs = dirs / spec.inertia.norm(dirs)[:, None]
    ts = np.linspace(0.0, radius, 257)
    worst = 0.0
    for d in dirs:
        vals = _growth_violation(spec, m_hat, M_hat, ts[:, None] * d)
        j = int(np.argmax(vals))
        best = float(vals[j])
        a, b = ts[max(j - 1, 0)], ts[min(j + 1, len(ts) - 1)]
        if b > a:
            r = minimize_scalar(lambda t: -float(_growth_violation(spec, m_hat, M_hat, t * d)),
                                bounds=(a, b), method="bounded", options={"xatol": 1e-10 * radius})
            best = max(best, -float(r.fun))
        worst = max(worst, best)
    # absorb rounding in the comparisons made by verify_growth
    return worst * (1.0 + 1e-12) + 1e-12


def verify_growth(spec: LagrangianSpec, m_hat: float, M_hat: float, b_hat: float,
                  samples: int = 10_000, radius: float = 1e3, rng=None):
    """Check both growth inequalities on fresh samples; returns (ok, worst slack)."""
    rng = np.random.default_rng(2) if rng is None else rng
    d = rng.standard_normal((samples, spec.dim))
    d /= spec.inertia.norm(d)[:, None]
    v = rng.uniform(0.0, radius, samples)[:, None] * d
    slack = b_hat - _growth_violation(spec, m_hat, M_hat, v)
    worst = float(slack.min())
    return worst >= 0.0, worst

