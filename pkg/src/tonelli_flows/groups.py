"""Concrete groups: U(1), SO(3) as unit quaternions, and truncated Diff(S^1).

Velocities are right-trivialized, ``xi = xdot x^{-1}``, and the evolution of
an algebra-valued path solves ``gdot = xi(t) g`` (for diffeomorphisms
``phidot = u(t) o phi``) from the identity.

Every group also exposes a *lift*: an unconstrained array representation of
an element used while integrating (the unreduced angle, the quaternion before
projection to SO(3), the Lagrangian positions of the collocation nodes).  Lifts
keep track of winding, which the Mane estimators need, and all lift routines
broadcast over leading batch axes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spectral import FourierBasis

TWO_PI = 2.0 * np.pi
ORIENTATION_FLOOR = 1e-6


class GroupError(ValueError):
    """Invalid group operation (variant mismatch, broken orientation, ...)."""


@dataclass(frozen=True, eq=False)
class GroupElement:
    kind: str
    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    def __repr__(self):
        return f"GroupElement({self.kind}, {np.array2string(self.data, precision=4)})"


@dataclass(frozen=True)
class EvolutionResult:
    path: list
    terminal: GroupElement
    defects: np.ndarray
    lifts: np.ndarray = field(repr=False)


def wrap_angle(a):
    """Map to (-pi, pi]."""
    return -((-np.asarray(a) + np.pi) % TWO_PI - np.pi)


def _lagrange4(x):
    """Cubic Lagrange weights on nodes 0..3 at points ``x``; shape ``x.shape + (4,)``."""
    x = np.asarray(x, dtype=float)[..., None]
    j = np.arange(4)
    w = np.ones(x.shape[:-1] + (4,))
    for k in range(4):
        fac = np.where(j == k, 1.0, (x - k) / np.where(j == k, 1.0, j - k))
        w = w * fac
    return w


def _stage_values(nodes, sig, interp):
    """Interpolated velocities at local coordinates ``sig`` of every interval.

    ``nodes``: ``(..., K+1, d)``; returns ``(..., K, len(sig), d)``.
    """
    sig = np.asarray(sig, dtype=float)
    if interp == "linear":
        a = nodes[..., :-1, None, :]
        b = nodes[..., 1:, None, :]
        return a + (b - a) * sig[:, None]
    K = nodes.shape[-2] - 1
    j0 = np.clip(np.arange(K) - 1, 0, K - 3)
    stencil = nodes[..., j0[:, None] + np.arange(4), :]          # (..., K, 4, d)
    w = _lagrange4((np.arange(K) - j0)[:, None] + sig)          # (K, S, 4)
    return np.einsum("ksj,...kjd->...ksd", w, stencil)


def _tree_product(P):
    """Ordered product ``P[n-1] @ ... @ P[0]`` over axis -3."""
    while P.shape[-3] > 1:
        if P.shape[-3] % 2:
            tail = P[..., -1:, :, :]
            P = P[..., :-1, :, :]
            P = P[..., 1::2, :, :] @ P[..., 0::2, :, :]
            P = np.concatenate([P[..., :-1, :, :], tail @ P[..., -1:, :, :]], axis=-3)
        else:
            P = P[..., 1::2, :, :] @ P[..., 0::2, :, :]
    return P[..., 0, :, :]


class Group:
    kind = ""
    dim = 0

    def _check(self, *elems):
        for e in elems:
            if e.kind != self.kind:
                raise GroupError(f"expected a {self.kind} element, got {e.kind}")

    def algebra_zero(self) -> np.ndarray:
        return np.zeros(self.dim)

    # -- evolution --------------------------------------------------------
    def evolve_lift(self, lift0, xi_nodes, horizon: float, dt: float = 1e-3,
                    return_defects: bool = False, interp: str = "linear"):
        """RK4 on ``lift' = xi(t) . lift`` with xi interpolated between nodes.

        ``xi_nodes`` has shape ``(..., K+1, dim)`` sampled uniformly on
        ``[0, horizon]``; ``interp`` is ``"linear"`` or ``"cubic"`` (local
        four-node Lagrange stencils, needs K >= 3).  Returns lifts at the K+1
        nodes, shape ``(..., K+1, L)``.
        """
        if not horizon > 0:
            raise ValueError("horizon must be positive")
        xi_nodes = np.asarray(xi_nodes, dtype=float)
        if not np.all(np.isfinite(xi_nodes)):
            raise ValueError("non-finite velocity samples")
        n_int = xi_nodes.shape[-2] - 1
        if n_int < 1:
            raise ValueError("need at least two velocity samples")
        if interp not in ("linear", "cubic"):
            raise ValueError(f"unknown interpolation {interp!r}")
        if interp == "cubic" and n_int < 3:
            interp = "linear"
        h_int = horizon / n_int
        n_sub = max(1, int(np.ceil(h_int / dt - 1e-9)))
        lift0 = np.broadcast_to(np.asarray(lift0, dtype=float),
                                xi_nodes.shape[:-2] + (self.lift_dim,))
        if self.rhs_matrix is not None:
            lifts, defects = self._evolve_linear(lift0, xi_nodes, h_int, n_sub, interp,
                                                 return_defects)
        else:
            lifts, defects = self._evolve_stepwise(lift0, xi_nodes, h_int, n_sub, interp,
                                                   return_defects)
        if return_defects:
            return lifts, defects
        return lifts

    # lift' = M(xi) lift for the matrix groups; None for nonlinear lifts
    rhs_matrix = None

    def _rk4_matrices(self, X0, Xh, X1, h):
        M0, Mh, M1 = self.rhs_matrix(X0), self.rhs_matrix(Xh), self.rhs_matrix(X1)
        eye = np.eye(self.lift_dim)
        K2 = Mh @ (eye + 0.5 * h * M0)
        K3 = Mh @ (eye + 0.5 * h * K2)
        K4 = M1 @ (eye + h * K3)
        return eye + h / 6.0 * (M0 + 2.0 * K2 + 2.0 * K3 + K4)

    def _evolve_linear(self, lift0, xi_nodes, h_int, n_sub, interp, return_defects):
        # every RK4 step is a linear map; build them all at once and multiply
        P = self._interval_maps(xi_nodes, n_sub, h_int / n_sub, interp)
        lift = lift0.copy()
        out = [lift]
        for i in range(P.shape[-3]):
            lift = self.lift_post(np.einsum("...ij,...j->...i", P[..., i, :, :], lift))
            self._check_lift(lift)
            out.append(lift)
        lifts = np.stack(out, axis=-2)
        defects = None
        if return_defects:
            coarse = self._rk4_matrices(_stage_values(xi_nodes, [0.0], interp)[..., 0, :],
                                        _stage_values(xi_nodes, [0.5], interp)[..., 0, :],
                                        _stage_values(xi_nodes, [1.0], interp)[..., 0, :], h_int)
            starts = lifts[..., :-1, :]
            c_end = self.lift_post(np.einsum("...kij,...kj->...ki", coarse, starts))
            f_end = self.lift_post(np.einsum("...kij,...kj->...ki", P, starts))
            err = np.abs(c_end - f_end).reshape(-1, P.shape[-3], self.lift_dim)
            defects = (np.max(err, axis=(0, 2)) / n_sub**4 if n_sub > 1
                       else np.zeros(P.shape[-3]))
        return lifts, defects

    def _interval_maps(self, xi_nodes, n_sub, h, interp="linear"):
        sig = np.arange(n_sub) / n_sub
        steps = self._rk4_matrices(_stage_values(xi_nodes, sig, interp),
                                   _stage_values(xi_nodes, sig + 0.5 / n_sub, interp),
                                   _stage_values(xi_nodes, sig + 1.0 / n_sub, interp), h)
        return _tree_product(steps)

    def perturbed_ends(self, lift0, xi_nodes, horizon: float, dt: float, step: float):
        """Terminal lifts after moving each node component by ``+step`` and ``-step``.

        Linear interpolation, matrix groups only.  A node only enters its two
        neighbouring intervals, so prefix and suffix products are reused.
        Returns an array of shape ``(2, K+1, dim, L)``.
        """
        if self.rhs_matrix is None:
            raise NotImplementedError("perturbed_ends needs a linear lift equation")
        xi_nodes = np.asarray(xi_nodes, dtype=float)
        n, d = xi_nodes.shape
        K = n - 1
        h_int = horizon / K
        n_sub = max(1, int(np.ceil(h_int / dt - 1e-9)))
        h = h_int / n_sub
        L = self.lift_dim
        P = self._interval_maps(xi_nodes, n_sub, h)
        eye = np.eye(L)
        before = [eye]
        for k in range(K):
            before.append(P[k] @ before[-1])
        after = [eye]
        for k in range(K - 1, -1, -1):
            after.append(after[-1] @ P[k])
        after = after[::-1]                     # after[k] = P[K-1] ... P[k]
        lift0 = np.asarray(lift0, dtype=float)
        out = np.empty((2, n, d, L))
        for sgn_i, sgn in enumerate((1.0, -1.0)):
            for i in range(n):
                lo, hi = max(i - 1, 0), min(i + 1, K)
                local = np.broadcast_to(xi_nodes[lo:hi + 1], (d, hi - lo + 1, d)).copy()
                local[np.arange(d), i - lo, np.arange(d)] += sgn * step
                Q = self._interval_maps(local, n_sub, h)        # (d, hi-lo, L, L)
                M = Q[:, 0]
                for j in range(1, hi - lo):
                    M = Q[:, j] @ M
                full = after[hi] @ M @ before[lo] if hi < K else M @ before[lo]
                out[sgn_i, i] = self.lift_post(full @ lift0)
        return out

    def _evolve_stepwise(self, lift0, xi_nodes, h_int, n_sub, interp, return_defects):
        h = h_int / n_sub
        sig = np.arange(n_sub + 1) / n_sub
        mids = (np.arange(n_sub) + 0.5) / n_sub
        ends = _stage_values(xi_nodes, sig, interp)
        halves = _stage_values(xi_nodes, mids, interp)
        lift = lift0.copy()
        out = [lift]
        defects = []
        for i in range(xi_nodes.shape[-2] - 1):
            start = lift
            for j in range(n_sub):
                lift = self._rk4(lift, ends[..., i, j, :], halves[..., i, j, :],
                                 ends[..., i, j + 1, :], h)
            if return_defects:
                mid = _stage_values(xi_nodes, [0.5], interp)[..., i, 0, :]
                coarse = self._rk4(start, ends[..., i, 0, :], mid, ends[..., i, -1, :], h_int)
                err = np.max(np.abs(coarse - lift)) / max(n_sub**4, 1)
                defects.append(0.0 if n_sub == 1 else float(err))
            self._check_lift(lift)
            out.append(lift)
        return np.stack(out, axis=-2), (np.asarray(defects) if return_defects else None)

    def _rk4(self, y, x0, xh, x1, h):
        k1 = self.lift_rhs(y, x0)
        k2 = self.lift_rhs(y + 0.5 * h * k1, xh)
        k3 = self.lift_rhs(y + 0.5 * h * k2, xh)
        k4 = self.lift_rhs(y + h * k3, x1)
        return self.lift_post(y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))

    def lift_post(self, lift):
        return lift

    def _check_lift(self, lift):
        if not np.all(np.isfinite(lift)):
            raise GroupError("evolution produced non-finite values")

    def evolve(self, xi_path, horizon: float, dt: float = 1e-3) -> EvolutionResult:
        """Group path driven by the sampled algebra path ``xi_path`` over ``[0, horizon]``."""
        xi_path = np.asarray(xi_path, dtype=float)
        lifts, defects = self.evolve_lift(self.to_lift(self.identity()), xi_path, horizon,
                                          dt, return_defects=True)
        path = [self.from_lift(l) for l in lifts]
        return EvolutionResult(path=path, terminal=path[-1], defects=defects, lifts=lifts)


class U1(Group):
    """The circle group; elements are angles in [0, 2 pi)."""

    kind = "U1"
    dim = 1
    lift_dim = 1

    def element(self, angle) -> GroupElement:
        a = float(np.ravel(angle)[0]) % TWO_PI
        if a >= TWO_PI:
            a = 0.0
        return GroupElement(self.kind, np.array([a]))

    def identity(self):
        return self.element(0.0)

    def compose(self, a, b):
        self._check(a, b)
        return self.element(a.data[0] + b.data[0])

    def inverse(self, a):
        self._check(a)
        return self.element(-a.data[0])

    def right_translate(self, x, xi):
        self._check(x)
        return np.asarray(xi, dtype=float).copy()

    def right_trivialize(self, x, xdot):
        self._check(x)
        return np.asarray(xdot, dtype=float).copy()

    def exp(self, xi):
        return self.element(np.asarray(xi)[0])

    def log(self, x):
        self._check(x)
        return np.array([float(wrap_angle(x.data[0]))])

    def distance(self, a, b):
        self._check(a, b)
        return float(abs(wrap_angle(a.data[0] - b.data[0])))

    def to_lift(self, x):
        return x.data.copy()

    def from_lift(self, lift):
        return self.element(lift[..., 0])

    def lift_rhs(self, lift, xi):
        return np.broadcast_to(xi, np.broadcast_shapes(np.shape(lift), np.shape(xi))).copy()

    def evolve_lift(self, lift0, xi_nodes, horizon: float, dt: float = 1e-3,
                    return_defects: bool = False, interp: str = "linear"):
        """Exact quadrature of the interpolated velocity (what RK4 reproduces here)."""
        if not horizon > 0:
            raise ValueError("horizon must be positive")
        xi_nodes = np.asarray(xi_nodes, dtype=float)
        if not np.all(np.isfinite(xi_nodes)):
            raise ValueError("non-finite velocity samples")
        n_int = xi_nodes.shape[-2] - 1
        if n_int < 1:
            raise ValueError("need at least two velocity samples")
        if interp not in ("linear", "cubic"):
            raise ValueError(f"unknown interpolation {interp!r}")
        h = horizon / n_int
        a, b = xi_nodes[..., :-1, :], xi_nodes[..., 1:, :]
        if interp == "cubic" and n_int >= 3:
            mid = _stage_values(xi_nodes, [0.5], "cubic")[..., 0, :]
            incr = h / 6.0 * (a + 4.0 * mid + b)
        else:
            incr = 0.5 * h * (a + b)
        lift0 = np.broadcast_to(np.asarray(lift0, dtype=float), xi_nodes.shape[:-2] + (1,))
        lifts = np.concatenate([lift0[..., None, :], lift0[..., None, :] + np.cumsum(incr, axis=-2)],
                               axis=-2)
        if return_defects:
            return lifts, np.zeros(n_int)
        return lifts

    def lift_defect(self, lift, target, winding=None):
        """Residual between a lifted endpoint and ``target``.

        With ``winding=None`` the nearest representative of the target is used;
        otherwise the lift must equal ``target + 2 pi winding`` exactly.
        """
        diff = lift[..., :1] - target.data[0]
        if winding is None:
            return wrap_angle(diff)
        return diff - TWO_PI * winding

    def winding(self, lift):
        return int(np.round(lift[0] / TWO_PI))

    def random_element(self, rng, scale=1.0):
        return self.element(rng.uniform(0.0, TWO_PI))

    def random_algebra(self, rng, scale=1.0):
        return scale * rng.standard_normal(1)


def cross(a, b):
    """``np.cross`` for trailing size-3 axes without its per-call overhead."""
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    return np.stack([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0], axis=-1)


def quat_mul(p, q):
    pw, px, py, pz = p[..., 0], p[..., 1], p[..., 2], p[..., 3]
    qw, qx, qy, qz = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return np.stack([
        pw * qw - px * qx - py * qy - pz * qz,
        pw * qx + px * qw + py * qz - pz * qy,
        pw * qy - px * qz + py * qw + pz * qx,
        pw * qz + px * qy - py * qx + pz * qw,
    ], axis=-1)


def _vec_quat_mul(u, q):
    """``[0, u] (x) q`` for a pure-vector left factor."""
    ux, uy, uz = u[..., 0], u[..., 1], u[..., 2]
    qw, qx, qy, qz = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return np.stack([
        -ux * qx - uy * qy - uz * qz,
        ux * qw + uy * qz - uz * qy,
        -ux * qz + uy * qw + uz * qx,
        ux * qy - uy * qx + uz * qw,
    ], axis=-1)


def quat_conj(q):
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_to_matrix(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


class SO3(Group):
    """Rotations stored as unit quaternions ``(w, x, y, z)``.

    The element keeps the quaternion sign it was built with, so a path's lift
    (which sheet of SU(2) it ends on) survives the round trip through
    :meth:`from_lift`; :meth:`distance` ignores the sign.
    """

    kind = "SO3"
    dim = 3
    lift_dim = 4

    def element(self, q) -> GroupElement:
        q = np.asarray(q, dtype=float).reshape(4)
        n = np.linalg.norm(q)
        if not np.isfinite(n) or n == 0.0:
            raise GroupError("quaternion must be finite and non-zero")
        return GroupElement(self.kind, q / n)

    def identity(self):
        return self.element([1.0, 0.0, 0.0, 0.0])

    def compose(self, a, b):
        self._check(a, b)
        return self.element(quat_mul(a.data, b.data))

    def inverse(self, a):
        self._check(a)
        return self.element(quat_conj(a.data))

    def right_translate(self, x, xi):
        self._check(x)
        xi = np.asarray(xi, dtype=float)
        return 0.5 * quat_mul(np.concatenate([[0.0], xi]), x.data)

    def right_trivialize(self, x, xdot):
        self._check(x)
        return 2.0 * quat_mul(np.asarray(xdot, dtype=float), quat_conj(x.data))[1:]

    def exp(self, xi):
        xi = np.asarray(xi, dtype=float)
        th = np.linalg.norm(xi)
        if th < 1e-300:
            return self.identity()
        return self.element(np.concatenate([[np.cos(th / 2)], np.sin(th / 2) * xi / th]))

    def log(self, x):
        """Principal rotation vector (angle in [0, pi])."""
        self._check(x)
        q = x.data if x.data[0] >= 0 else -x.data
        s = np.linalg.norm(q[1:])
        if s < 1e-300:
            return np.zeros(3)
        return 2.0 * np.arctan2(s, q[0]) * q[1:] / s

    def distance(self, a, b):
        self._check(a, b)
        r = quat_mul(quat_conj(a.data), b.data)
        return float(2.0 * np.arctan2(np.linalg.norm(r[1:]), abs(r[0])))

    def matrix(self, x):
        self._check(x)
        return quat_to_matrix(x.data)

    def to_lift(self, x):
        return x.data.copy()

    def from_lift(self, lift):
        return self.element(lift)

    def lift_rhs(self, lift, xi):
        return 0.5 * _vec_quat_mul(np.asarray(xi), lift)

    def rhs_matrix(self, xi):
        """Matrix of ``q -> [0, xi] (x) q / 2``."""
        xi = np.asarray(xi, dtype=float)
        x, y, z = xi[..., 0], xi[..., 1], xi[..., 2]
        o = np.zeros_like(x)
        M = np.stack([np.stack([o, -x, -y, -z], -1),
                      np.stack([x, o, -z, y], -1),
                      np.stack([y, z, o, -x], -1),
                      np.stack([z, -y, x, o], -1)], -2)
        return 0.5 * M

    def lift_post(self, lift):
        return lift / np.linalg.norm(lift, axis=-1, keepdims=True)

    def lift_defect(self, lift, target, winding=None):
        """``winding=None``: sign-insensitive; ``0``/``1``: end on ``+target``/``-target``."""
        t = target.data
        if winding is None:
            s = np.sign(np.sum(lift * t, axis=-1, keepdims=True))
            s = np.where(s == 0, 1.0, s)
            return lift * s - t
        return lift - (1.0 - 2.0 * (winding % 2)) * t

    def winding(self, lift):
        return 0 if lift[0] >= 0 else 1

    def random_element(self, rng, scale=1.0):
        return self.element(rng.standard_normal(4))

    def random_algebra(self, rng, scale=1.0):
        return scale * rng.standard_normal(3)


class DiffS1(Group):
    """Orientation-preserving circle diffeomorphisms truncated to N Fourier modes.

    ``phi(x) = x + d(x)`` with the periodic displacement ``d`` stored in the
    basis of :class:`FourierBasis`, so the identity is the zero vector.  The
    mean of ``d`` is reduced to ``[-pi, pi)`` since ``d`` and ``d + 2 pi``
    describe the same map of the circle.
    """

    kind = "DiffS1"

    def __init__(self, n_modes: int = 64):
        self.basis = FourierBasis(n_modes)
        self.n_modes = n_modes
        self.dim = self.basis.dim
        self.lift_dim = self.basis.n_grid

    def evolve_tangent(self, xi_nodes, horizon: float = 1.0, dt: float = 1e-3):
        """Terminal lift and its derivative w.r.t. the nodes (linear interpolation).

        RK4 applied to the lift equation together with its variational
        equation, which reproduces the exact derivative of the RK4 map.
        Returns ``(lift, J)`` with ``J`` of shape ``(L, K+1, dim)``.
        """
        xi_nodes = np.asarray(xi_nodes, dtype=float)
        n, d = xi_nodes.shape
        K = n - 1
        h_int = horizon / K
        n_sub = max(1, int(np.ceil(h_int / dt - 1e-9)))
        h = h_int / n_sub
        b = self.basis
        y = b.grid.copy()
        J = np.zeros((y.size, n, d))

        def rhs(y, J, xi, i, sig):
            B = b.basis_matrix(y)                        # (L, dim)
            f = B @ xi
            dfdy = b.basis_matrix(y) @ b.deriv(xi)       # u'(y)
            dJ = dfdy[:, None, None] * J
            dJ[:, i, :] += (1.0 - sig) * B
            dJ[:, i + 1, :] += sig * B
            return f, dJ

        for i in range(K):
            a, c = xi_nodes[i], xi_nodes[i + 1]
            for j in range(n_sub):
                s0 = j / n_sub
                sh = s0 + 0.5 / n_sub
                s1 = s0 + 1.0 / n_sub
                x0, xh, x1 = a + (c - a) * s0, a + (c - a) * sh, a + (c - a) * s1
                k1 = rhs(y, J, x0, i, s0)
                k2 = rhs(y + 0.5 * h * k1[0], J + 0.5 * h * k1[1], xh, i, sh)
                k3 = rhs(y + 0.5 * h * k2[0], J + 0.5 * h * k2[1], xh, i, sh)
                k4 = rhs(y + h * k3[0], J + h * k3[1], x1, i, s1)
                y = y + h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
                J = J + h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            self._check_lift(y)
        return y, J

    def _orientation_margin(self, d):
        return 1.0 + np.min(self.basis.to_grid(self.basis.deriv(d)))

    def element(self, displacement, check: bool = True) -> GroupElement:
        d = np.array(displacement, dtype=float).reshape(self.dim)
        if not np.all(np.isfinite(d)):
            raise GroupError("non-finite displacement")
        mean = self.basis.mean(d)
        shift = TWO_PI * np.floor((mean + np.pi) / TWO_PI)
        d[0] -= shift * np.sqrt(TWO_PI)
        if check and self._orientation_margin(d) <= ORIENTATION_FLOOR:
            raise GroupError("displacement does not define an orientation-preserving map "
                             "(truncation breakdown)")
        return GroupElement(self.kind, d)

    def identity(self):
        return GroupElement(self.kind, np.zeros(self.dim))

    def from_map(self, phi) -> GroupElement:
        """Element from a callable lift ``phi`` of a circle diffeomorphism."""
        return self.element(self.basis.from_function(lambda x: phi(x) - x))

    def _warp(self, d):
        x = self.basis.grid
        return x + self.basis.to_grid(d)

    def compose(self, a, b):
        """``a o b`` via spectral interpolation of ``a`` at the warped nodes of ``b``."""
        self._check(a, b)
        db = self.basis.to_grid(b.data)
        y = self.basis.grid + db
        vals = db + self.basis.evaluate(a.data, y)
        return self.element(self.basis.from_grid(vals))

    def _preimages(self, d, y=None):
        """Solve ``z + d(z) = y`` at the collocation nodes by Newton's method."""
        b = self.basis
        y = b.grid if y is None else y
        dd = b.deriv(d)
        z = y - b.evaluate(d, y)
        for _ in range(60):
            f = z + b.evaluate(d, z) - y
            fp = 1.0 + b.evaluate(dd, z)
            if np.any(fp <= 0):
                raise GroupError("map is not invertible")
            z = z - f / fp
            if np.max(np.abs(f)) < 1e-14:
                break
        return z

    def inverse(self, a):
        self._check(a)
        z = self._preimages(a.data)
        return self.element(self.basis.from_grid(z - self.basis.grid))

    def right_translate(self, x, xi):
        """Tangent vector ``xi o phi`` at ``phi`` (in displacement coordinates)."""
        self._check(x)
        return self.basis.from_grid(self.basis.evaluate(xi, self._warp(x.data)))

    def right_trivialize(self, x, xdot):
        """``xdot o phi^{-1}``."""
        self._check(x)
        z = self._preimages(x.data)
        return self.basis.from_grid(self.basis.evaluate(xdot, z))

    def exp(self, xi, steps: int = 64):
        xi = np.asarray(xi, dtype=float)
        return self.evolve(np.stack([xi, xi]), 1.0, dt=1.0 / steps).terminal

    def log(self, x):
        """First-order guess for a generating velocity (the displacement itself)."""
        self._check(x)
        return x.data.copy()

    def distance(self, a, b):
        self._check(a, b)
        diff = a.data - b.data
        mean = self.basis.mean(diff)
        diff = diff.copy()
        diff[0] -= TWO_PI * np.round(mean / TWO_PI) * np.sqrt(TWO_PI)
        return float(np.linalg.norm(diff))

    def to_lift(self, x):
        return self._warp(x.data)

    def from_lift(self, lift):
        return self.element(self.basis.from_grid(lift - self.basis.grid))

    def lift_rhs(self, lift, xi):
        return self.basis.evaluate(xi, lift)

    def _check_lift(self, lift):
        super()._check_lift(lift)
        gaps = np.diff(lift, axis=-1)
        wrap = lift[..., :1] + TWO_PI - lift[..., -1:]
        if np.any(gaps <= 0) or np.any(wrap <= 0):
            raise GroupError("evolution lost orientation (node crossing)")

    def lift_defect(self, lift, target, winding=None):
        diff = self.basis.from_grid(lift - self.basis.grid) - target.data
        mean = self.basis.mean(diff)
        n = np.round(mean / TWO_PI) if winding is None else winding
        shift = np.zeros_like(diff)
        shift[..., 0] = TWO_PI * n * np.sqrt(TWO_PI)
        return diff - shift

    def winding(self, lift):
        return int(np.round(np.mean(lift - self.basis.grid) / TWO_PI))

    def random_element(self, rng, scale=0.1, modes: int = 4):
        d = np.zeros(self.dim)
        d[0] = rng.uniform(-np.pi, np.pi) * np.sqrt(TWO_PI)
        km = min(modes, self.n_modes - 1)
        amp = scale * rng.standard_normal((km, 2)) / np.arange(1, km + 1)[:, None] ** 2
        d[1:2 * km + 1:2] = amp[:, 0]
        d[2:2 * km + 2:2] = amp[:, 1]
        # keep well inside the orientation-preserving set
        while self._orientation_margin(d) < 0.3:
            d[1:] *= 0.5
        return self.element(d)

    def random_algebra(self, rng, scale=1.0, modes: int = 4):
        v = np.zeros(self.dim)
        km = min(modes, self.n_modes - 1)
        v[:2 * km + 1] = scale * rng.standard_normal(2 * km + 1)
        return v


def make_group(kind: str, n_modes: int = 64) -> Group:
    kind_l = kind.lower()
    if kind_l == "u1":
        return U1()
    if kind_l == "so3":
        return SO3()
    if kind_l in ("diffs1", "diff"):
        return DiffS1(n_modes)
    raise ValueError(f"unknown group {kind!r}")
