"""Right-invariant metrics via inertia operators, and the operators ad / ad*.

Momenta are identified with algebra vectors through the Euclidean pairing of
payloads (the L2(S^1) pairing for the Fourier coefficients of DiffS1).

Sign convention: ``ad`` is the bracket of right-invariant vector fields,

* DiffS1: ``ad_u v = u v' - v u'``
* SO3:    ``ad_u v = -(u x v)`` (the same convention seen through the action
  of so(3) as linear vector fields on R^3)
* U1:     ``ad = 0``

and ``ad*`` is defined by ``<ad*_u m, v> = <m, ad_u v>``.  With these choices
the reduced equation of a right-invariant Lagrangian reads
``d/dt (dl/du) = ad*_u (dl/du)``.
"""
from __future__ import annotations

import numpy as np

from .groups import Group, cross


class InertiaOperator:
    """Diagonal inertia operator ``A`` defining ``G(v, w) = <A v, w>``.

    DiffS1 uses the Sobolev symbol ``(1 + k^2)^s``; SO3 a diagonal inertia
    tensor; U1 a scalar mass.  The symbol table is computed once.
    """

    def __init__(self, group: Group, s: float = 1.0, inertia=None, mass: float = 1.0):
        self.group = group
        self.s = float(s)
        if group.kind == "DiffS1":
            if self.s < 0:
                raise ValueError("Sobolev order must be non-negative")
            symbol = (1.0 + group.basis.wavenumbers**2) ** self.s
        elif group.kind == "SO3":
            symbol = np.ones(3) if inertia is None else np.asarray(inertia, dtype=float).reshape(3)
        else:
            symbol = np.array([float(mass)])
        if not np.all(symbol > 0) or not np.all(np.isfinite(symbol)):
            raise ValueError("inertia must be positive definite")
        symbol = symbol.copy()
        symbol.setflags(write=False)
        self.symbol = symbol

    @property
    def dim(self):
        return self.symbol.size

    def apply(self, v):
        return self.symbol * np.asarray(v, dtype=float)

    def solve(self, m):
        return np.asarray(m, dtype=float) / self.symbol

    def inner(self, v, w):
        return np.sum(self.symbol * np.asarray(v) * np.asarray(w), axis=-1)

    def norm(self, v):
        return np.sqrt(self.inner(v, v))

    def dual_norm(self, m):
        """Norm of a covector w.r.t. the metric, ``sqrt(<m, A^{-1} m>)``."""
        m = np.asarray(m)
        return np.sqrt(np.sum(m * m / self.symbol, axis=-1))

    def __repr__(self):
        return f"InertiaOperator({self.group.kind}, s={self.s}, symbol[:3]={self.symbol[:3]})"


def inertia_apply(A: InertiaOperator, v):
    return A.apply(v)


def inertia_solve(A: InertiaOperator, m):
    return A.solve(m)


def inner(A: InertiaOperator, v, w):
    return A.inner(v, w)


def ad(group: Group, u, v):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if group.kind == "U1":
        return np.zeros(np.broadcast_shapes(u.shape, v.shape))
    if group.kind == "SO3":
        return -cross(u, v)
    b = group.basis
    return b.product(u, b.deriv(v)) - b.product(v, b.deriv(u))


def ad_star(group: Group, u, m):
    u = np.asarray(u, dtype=float)
    m = np.asarray(m, dtype=float)
    if group.kind == "U1":
        return np.zeros(np.broadcast_shapes(u.shape, m.shape))
    if group.kind == "SO3":
        return cross(u, m)
    b = group.basis
    # -(u m' + 2 u' m) with all four factors from one inverse FFT on the padded grid
    p = b.n_pad
    fu = b._to_rfft(u, p)
    fm = b._to_rfft(m, p)
    ik = 1j * np.arange(fu.shape[-1])
    fu, fm = np.broadcast_arrays(fu, fm)
    ug, dug, mg, dmg = np.fft.irfft(np.stack([fu, ik * fu, fm, ik * fm]), n=p, axis=-1)
    return -b.from_grid(ug * dmg + 2.0 * dug * mg)


def ad_transpose(A: InertiaOperator, u, v):
    """Metric transpose of ``ad_u``: ``G(ad^T_u v, w) = G(v, ad_u w)``."""
    return A.solve(ad_star(A.group, u, A.apply(v)))
