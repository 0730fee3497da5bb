"""Composite model ``F(x) = theta(A x) + g1(B x) + g2(x)`` and its oracles.

Points are flat float64 arrays; images are stored row-major, so the blur and
difference operators below reproduce bit-for-bit across runs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.ndimage import correlate1d


class DomainViolation(ValueError):
    """An oracle was evaluated outside the domain it supports."""


class UnsupportedOperation(RuntimeError):
    """A structurally unavailable oracle was requested."""


# ---------------------------------------------------------------------------
# smooth losses (separable, with diagonal Hessian oracles)
# ---------------------------------------------------------------------------


class CauchyLoss:
    """``0.5 * sum log(gamma^2 + (u - b)^2)``, robust to heavy-tailed residuals."""

    separable = True

    def __init__(self, b, gamma):
        if gamma <= 0:
            raise ValueError("gamma must be positive")
        self.b = np.asarray(b, dtype=float).ravel()
        self.gamma = float(gamma)

    def value(self, u):
        r = u - self.b
        return 0.5 * float(np.sum(np.log(self.gamma**2 + r * r)))

    def grad(self, u):
        r = u - self.b
        return r / (self.gamma**2 + r * r)

    def hess_diag(self, u):
        r2 = (u - self.b) ** 2
        g2 = self.gamma**2
        return (g2 - r2) / (g2 + r2) ** 2


class StudentTLoss:
    """``sum ln(1 + (u - b)^2 / gamma)``."""

    separable = True

    def __init__(self, b, gamma):
        if gamma <= 0:
            raise ValueError("gamma must be positive")
        self.b = np.asarray(b, dtype=float).ravel()
        self.gamma = float(gamma)

    def value(self, u):
        r = u - self.b
        return float(np.sum(np.log1p(r * r / self.gamma)))

    def grad(self, u):
        r = u - self.b
        return 2.0 * r / (self.gamma + r * r)

    def hess_diag(self, u):
        r2 = (u - self.b) ** 2
        return 2.0 * (self.gamma - r2) / (self.gamma + r2) ** 2


class QuadraticLoss:
    """``0.5 * ||u - b||^2``; handy for toys and strongly convex instances."""

    separable = True

    def __init__(self, b):
        self.b = np.asarray(b, dtype=float).ravel()

    def value(self, u):
        r = u - self.b
        return 0.5 * float(np.dot(r, r))

    def grad(self, u):
        return u - self.b

    def hess_diag(self, u):
        return np.ones_like(u)


# ---------------------------------------------------------------------------
# linear operators (flat-vector convention, exact adjoints)
# ---------------------------------------------------------------------------


class IdentityOp:
    def __init__(self, n):
        self.shape_in = n
        self.shape_out = n

    def apply(self, x):
        return np.asarray(x, dtype=float).copy()

    def adjoint(self, z):
        return np.asarray(z, dtype=float).copy()

    def norm2_bound(self):
        return 1.0


class MatrixOp:
    """Dense or scipy-sparse matrix as an operator."""

    def __init__(self, mat):
        self.mat = mat
        self.shape_out, self.shape_in = mat.shape
        self._norm2 = None

    def apply(self, x):
        return np.asarray(self.mat @ x, dtype=float).ravel()

    def adjoint(self, z):
        return np.asarray(self.mat.T @ z, dtype=float).ravel()

    def norm2_bound(self):
        # squared spectral norm via power iteration on A^T A, cached
        if self._norm2 is None:
            rng = np.random.default_rng(0)
            v = rng.standard_normal(self.shape_in)
            v /= np.linalg.norm(v)
            lam = 0.0
            for _ in range(80):
                w = self.adjoint(self.apply(v))
                lam = float(np.linalg.norm(w))
                if lam == 0.0:
                    break
                v = w / lam
            self._norm2 = lam * 1.01 + 1e-12
        return self._norm2

    def dense(self):
        m = self.mat
        return m.toarray() if hasattr(m, "toarray") else np.asarray(m)


class GaussianBlur2D:
    """Separable 2-D correlation with replicate (edge) boundary handling.

    Forward pads by edge replication then applies a valid correlation; the
    adjoint is the exact transpose (full 1-D convolutions followed by folding
    the padded border back onto the edge pixels), so the adjoint identity
    holds to machine precision.
    """

    def __init__(self, shape, kernel):
        kernel = np.asarray(kernel, dtype=float)
        if kernel.ndim != 2 or kernel.shape[0] % 2 == 0 or kernel.shape[1] % 2 == 0:
            raise ValueError("kernel must be 2-D with odd sides")
        self.shape2d = tuple(shape)
        m, n = self.shape2d
        r = kernel.shape[0] // 2
        if m < kernel.shape[0] or n < kernel.shape[1]:
            raise ValueError("image smaller than kernel")
        self.kernel = kernel
        self.radius = r
        # rank-1 factorization; exact for the Gaussian test kernel
        u, s, vt = np.linalg.svd(kernel)
        if s[1:].max(initial=0.0) > 1e-12 * s[0]:
            raise ValueError("kernel is not separable")
        self.krow = u[:, 0] * np.sqrt(s[0])   # along axis 0
        self.kcol = vt[0, :] * np.sqrt(s[0])  # along axis 1
        self.shape_in = m * n
        self.shape_out = m * n

    def apply(self, x):
        img = np.asarray(x, dtype=float).reshape(self.shape2d)
        out = correlate1d(img, self.krow, axis=0, mode="nearest")
        out = correlate1d(out, self.kcol, axis=1, mode="nearest")
        return out.ravel()

    def _adjoint_axis(self, z, k, axis):
        r = len(k) // 2
        pad = [(0, 0), (0, 0)]
        pad[axis] = (r, r)
        zp = np.pad(z, pad, mode="constant")
        t = correlate1d(zp, k[::-1], axis=axis, mode="constant")
        # fold replicate-padding contributions onto the first/last entries
        sl = [slice(None), slice(None)]
        sl[axis] = slice(r, -r)
        core = t[tuple(sl)].copy()
        head = [slice(None), slice(None)]
        head[axis] = slice(0, r)
        tail = [slice(None), slice(None)]
        tail[axis] = slice(-r, None)
        first = [slice(None), slice(None)]
        first[axis] = 0
        last = [slice(None), slice(None)]
        last[axis] = -1
        core[tuple(first)] += t[tuple(head)].sum(axis=axis)
        core[tuple(last)] += t[tuple(tail)].sum(axis=axis)
        return core

    def adjoint(self, z):
        img = np.asarray(z, dtype=float).reshape(self.shape2d)
        out = self._adjoint_axis(img, self.kcol, axis=1)
        out = self._adjoint_axis(out, self.krow, axis=0)
        return out.ravel()

    def norm2_bound(self):
        # non-negative kernel summing to one: row/column sums of the matrix
        # are at most one, so the spectral norm is at most one
        k = np.abs(self.kernel)
        return float(k.sum()) ** 2

    def rowsq_apply(self, x):
        """Action of the entrywise-squared operator (kernel squared is
        separable too); used for diagonal preconditioning."""
        img = np.asarray(x, dtype=float).reshape(self.shape2d)
        out = correlate1d(img, self.krow**2, axis=0, mode="nearest")
        out = correlate1d(out, self.kcol**2, axis=1, mode="nearest")
        return out.ravel()


class GridDiff2D:
    """Stacked forward differences ``[D_h; D_v]`` on an m-by-n grid.

    Replicate boundary: the difference in the last column (row) is zero,
    which makes the adjoint a clean negative divergence.
    """

    def __init__(self, shape):
        self.shape2d = tuple(shape)
        m, n = self.shape2d
        self.shape_in = m * n
        self.shape_out = 2 * m * n

    def apply(self, x):
        m, n = self.shape2d
        img = np.asarray(x, dtype=float).reshape(m, n)
        dh = np.zeros((m, n))
        dv = np.zeros((m, n))
        dh[:, :-1] = img[:, 1:] - img[:, :-1]
        dv[:-1, :] = img[1:, :] - img[:-1, :]
        return np.concatenate([dh.ravel(), dv.ravel()])

    def adjoint(self, z):
        m, n = self.shape2d
        z = np.asarray(z, dtype=float)
        dh = z[: m * n].reshape(m, n)
        dv = z[m * n :].reshape(m, n)
        out = np.zeros((m, n))
        out[:, :-1] -= dh[:, :-1]
        out[:, 1:] += dh[:, :-1]
        out[:-1, :] -= dv[:-1, :]
        out[1:, :] += dv[:-1, :]
        return out.ravel()

    def norm2_bound(self):
        return 8.0


class ChainDiff1D:
    """``B x = [x_1 - x_2, ..., x_{n-1} - x_n]``."""

    def __init__(self, n):
        self.shape_in = n
        self.shape_out = max(n - 1, 0)

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        return x[:-1] - x[1:]

    def adjoint(self, z):
        z = np.asarray(z, dtype=float)
        out = np.zeros(self.shape_in)
        out[:-1] += z
        out[1:] -= z
        return out

    def norm2_bound(self):
        return 4.0

    def dense(self):
        n = self.shape_in
        mat = np.zeros((n - 1, n))
        idx = np.arange(n - 1)
        mat[idx, idx] = 1.0
        mat[idx, idx + 1] = -1.0
        return mat


# ---------------------------------------------------------------------------
# convex pieces: g1 on Y (composed with B) and g2 on X
# ---------------------------------------------------------------------------


class ZeroFun:
    """The zero function; its conjugate is the indicator of the origin."""

    def value(self, y):
        return 0.0

    def prox(self, v, t):
        return np.asarray(v, dtype=float).copy()

    def conj_prox(self, v, t):
        return np.zeros_like(np.asarray(v, dtype=float))

    def conj_value(self, w):
        return 0.0 if np.max(np.abs(w), initial=0.0) <= 1e-12 else np.inf

    def shifted_conj_prox(self, v, t, mu):
        return v * (mu / (t + mu))

    def shifted_conj_jac_diag(self, v, t, mu):
        return np.full_like(np.asarray(v, dtype=float), mu / (t + mu))

    def shifted_conj_value(self, eta, mu):
        return float(np.dot(eta, eta)) / (2.0 * mu)

    def domain_project(self, v):
        return np.asarray(v, dtype=float).copy()


class L1Norm:
    """``nu * ||y||_1``; conjugate is the box indicator on [-nu, nu]."""

    def __init__(self, nu):
        if nu <= 0:
            raise ValueError("nu must be positive")
        self.nu = float(nu)

    def value(self, y):
        return self.nu * float(np.sum(np.abs(y)))

    def prox(self, v, t):
        a = t * self.nu
        return np.sign(v) * np.maximum(np.abs(v) - a, 0.0)

    def conj_prox(self, v, t):
        return np.clip(v, -self.nu, self.nu)

    def conj_value(self, w):
        tol = 1e-9 * max(1.0, self.nu)
        return 0.0 if np.max(np.abs(w), initial=0.0) <= self.nu + tol else np.inf


class IsoTV2D:
    """Isotropic total variation: ``nu * sum_ij sqrt(dh_ij^2 + dv_ij^2)``.

    Operates on the stacked ``[dh; dv]`` layout produced by GridDiff2D. The
    conjugate is the indicator of per-pixel Euclidean balls of radius nu, so
    its prox is a pixel-wise radial projection independent of the step.
    """

    def __init__(self, nu, shape):
        if nu <= 0:
            raise ValueError("nu must be positive")
        self.nu = float(nu)
        self.shape2d = tuple(shape)

    def _pairs(self, y):
        p = self.shape2d[0] * self.shape2d[1]
        y = np.asarray(y, dtype=float)
        if y.size != 2 * p:
            raise ValueError("stacked pair layout mismatch")
        return y[:p], y[p:]

    def value(self, y):
        a, b = self._pairs(y)
        return self.nu * float(np.sum(np.hypot(a, b)))

    def prox(self, v, t):
        a, b = self._pairs(v)
        norms = np.hypot(a, b)
        shrink = np.maximum(norms - t * self.nu, 0.0) / np.maximum(norms, 1e-300)
        return np.concatenate([a * shrink, b * shrink])

    def conj_prox(self, v, t):
        a, b = self._pairs(v)
        norms = np.hypot(a, b)
        scale = self.nu / np.maximum(norms, self.nu)
        return np.concatenate([a * scale, b * scale])

    def conj_value(self, w):
        a, b = self._pairs(w)
        tol = 1e-9 * max(1.0, self.nu)
        return 0.0 if np.max(np.hypot(a, b), initial=0.0) <= self.nu + tol else np.inf


class WeightedL1:
    """``nu * sum_i w_i |x_i|`` with non-negative weights ``w``."""

    def __init__(self, nu, w):
        w = np.asarray(w, dtype=float)
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        if nu < 0:
            raise ValueError("nu must be non-negative")
        self.nu = float(nu)
        self.w = w

    @property
    def thresholds(self):
        return self.nu * self.w

    def value(self, x):
        return float(np.sum(self.thresholds * np.abs(x)))

    def prox(self, v, t):
        a = t * self.thresholds
        return np.sign(v) * np.maximum(np.abs(v) - a, 0.0)

    def conj_prox(self, v, t):
        a = self.thresholds
        return np.clip(v, -a, a)

    def conj_value(self, w):
        tol = 1e-9 * max(1.0, float(np.max(self.thresholds, initial=0.0)))
        return 0.0 if np.all(np.abs(w) <= self.thresholds + tol) else np.inf

    def shifted_conj_prox(self, v, t, mu):
        return v - (t / (t + mu)) * self.prox(v, 1.0)

    def shifted_conj_jac_diag(self, v, t, mu):
        active = np.abs(v) > self.thresholds
        out = np.ones_like(np.asarray(v, dtype=float))
        out[active] = mu / (t + mu)
        return out

    def shifted_conj_value(self, eta, mu):
        excess = np.maximum(np.abs(eta) - self.thresholds, 0.0)
        return float(np.dot(excess, excess)) / (2.0 * mu)

    def domain_project(self, v):
        return np.asarray(v, dtype=float).copy()


class NonnegIndicator:
    """Indicator of the non-negative orthant."""

    def value(self, x):
        return 0.0 if np.min(x, initial=0.0) >= 0.0 else np.inf

    def prox(self, v, t):
        return np.maximum(v, 0.0)

    def conj_prox(self, v, t):
        return np.minimum(v, 0.0)

    def conj_value(self, w):
        return 0.0 if np.max(w, initial=0.0) <= 1e-9 else np.inf

    def shifted_conj_prox(self, v, t, mu):
        return v - (t / (t + mu)) * np.maximum(v, 0.0)

    def shifted_conj_jac_diag(self, v, t, mu):
        out = np.ones_like(np.asarray(v, dtype=float))
        out[v > 0] = mu / (t + mu)
        return out

    def shifted_conj_value(self, eta, mu):
        pos = np.maximum(eta, 0.0)
        return float(np.dot(pos, pos)) / (2.0 * mu)

    def domain_project(self, v):
        return np.maximum(v, 0.0)


# ---------------------------------------------------------------------------
# the composite problem
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CompositeProblem:
    """Immutable problem instance; all oracles are pure.

    ``sg_split``, when given, maps x to the positive part V(x) of the
    gradient split ``grad f = V - U`` used by the split-gradient metric.
    """

    theta: object
    A_op: object
    g1: object
    B_op: object
    g2: object
    mu_lower: float
    sg_split: Optional[Callable] = None

    @property
    def dim(self):
        return self.A_op.shape_in

    def f(self, x):
        val = self.theta.value(self.A_op.apply(x))
        if not np.isfinite(val):
            raise DomainViolation("smooth term evaluated to a non-finite value")
        return val

    def grad_f(self, x):
        u = self.A_op.apply(x)
        g = self.A_op.adjoint(self.theta.grad(u))
        if not np.all(np.isfinite(g)):
            raise DomainViolation("gradient evaluated to a non-finite value")
        return g

    def hess_f_apply(self, x, v):
        """True Hessian action A* Diag(theta''(A x)) A v (no clipping)."""
        if not getattr(self.theta, "separable", False):
            raise UnsupportedOperation("Hessian action requires a separable loss")
        h = self.theta.hess_diag(self.A_op.apply(x))
        return self.A_op.adjoint(h * self.A_op.apply(v))

    def g(self, x):
        v2 = self.g2.value(x)
        if not np.isfinite(v2):
            return np.inf
        return self.g1.value(self.B_op.apply(x)) + v2

    def F(self, x):
        gval = self.g(x)
        if gval == np.inf:
            return np.inf
        return self.f(x) + gval

    def in_domain(self, x):
        return np.isfinite(self.g2.value(x))

    def domain_project(self, x):
        return self.g2.domain_project(x)


def adjoint_mismatch(op, rng, trials=100):
    """Max relative defect of <Ax, z> = <x, A*z> over random pairs."""

    worst = 0.0
    for _ in range(trials):
        x = rng.standard_normal(op.shape_in)
        z = rng.standard_normal(op.shape_out)
        lhs = float(np.dot(op.apply(x), z))
        rhs = float(np.dot(x, op.adjoint(z)))
        scale = max(abs(lhs), abs(rhs), 1e-30)
        worst = max(worst, abs(lhs - rhs) / scale)
    return worst


def residual_r(p: CompositeProblem, x, prox_g):
    """Prox-gradient fixed-point residual ``||x - prox_g(x - grad f(x))||``.

    ``prox_g(v)`` must return the proximal point of the *full* g at unit
    step; such an oracle only exists in test scope for small instances.
    """

    if prox_g is None:
        raise UnsupportedOperation("residual_r needs a full-g prox oracle")
    if not p.in_domain(x):
        return np.inf
    step = x - p.grad_f(x)
    return float(np.linalg.norm(x - prox_g(step)))


def residual_rk(sub, y, prox_g):
    """Subproblem fixed-point residual at y for the frozen model at x_k."""

    if prox_g is None:
        raise UnsupportedOperation("residual_rk needs a full-g prox oracle")
    inner = y - sub.grad_k - sub.metric.apply(y - sub.x_k)
    return float(np.linalg.norm(y - prox_g(inner)))
