"""Variable-metric operators: Hessian-type, split-gradient diagonal, 0-memory BFGS.

Every built metric G satisfies ``mu I <= G <= norm_upper I`` with exact
bounds cached on the object; the diagonal and BFGS builders cap their scalar
step so the lower bound never breaks.
"""

from __future__ import annotations

import numpy as np

from .problem import UnsupportedOperation


class HessianMetric:
    """``G v = A*(w o A v) + mu v`` with clipped curvature weights ``w >= 0``."""

    form = "hessian"
    supports_inverse = False

    def __init__(self, A_op, weights, mu):
        weights = np.asarray(weights, dtype=float)
        if np.any(weights < 0):
            raise ValueError("curvature weights must be non-negative")
        if mu <= 0:
            raise ValueError("mu must be positive")
        self.A_op = A_op
        self.weights = weights
        self.mu = float(mu)
        self.sqrt_w = np.sqrt(weights)
        self.mu_lower = float(mu)
        self.norm_upper = float(A_op.norm2_bound() * weights.max(initial=0.0) + mu)

    def apply(self, v):
        return self.A_op.adjoint(self.weights * self.A_op.apply(v)) + self.mu * v

    def inv_apply(self, v):
        raise UnsupportedOperation("Hessian-type metric has no closed-form inverse")

    # the weighted operator A_k with A_k* A_k = G - mu I
    def ak_apply(self, v):
        return self.sqrt_w * self.A_op.apply(v)

    def ak_adjoint(self, u):
        return self.A_op.adjoint(self.sqrt_w * u)

    def ak_dense(self):
        if hasattr(self.A_op, "dense"):
            return self.sqrt_w[:, None] * self.A_op.dense()
        return None


class DiagonalMetric:
    form = "diagonal"
    supports_inverse = True

    def __init__(self, diag):
        diag = np.asarray(diag, dtype=float)
        if np.any(diag <= 0):
            raise ValueError("diagonal metric must be positive")
        self.diag = diag
        self.mu_lower = float(diag.min())
        self.norm_upper = float(diag.max())

    def apply(self, v):
        return self.diag * v

    def inv_apply(self, v):
        return v / self.diag


class Bfgs0Metric:
    """Rank-two curvature model ``G = D / alpha`` from a single secant pair.

    ``D^{-1} x = gamma2 (x - rho <s,x> r - rho <r,x> s + rho^2 |r|^2 <s,x> s)
    + rho <s,x> s`` is the one-step BFGS inverse update of ``gamma2 I``; its
    inverse has the matching closed form, so both directions cost O(n). A
    pair with ``rho == 0`` degrades to the scaled identity.
    """

    form = "bfgs0"
    supports_inverse = True

    def __init__(self, gamma2, rho, s, r, alpha):
        self.gamma2 = float(gamma2)
        self.rho = float(rho)
        self.s = np.asarray(s, dtype=float)
        self.r = np.asarray(r, dtype=float)
        self.alpha = float(alpha)
        if self.gamma2 <= 0 or self.alpha <= 0:
            raise ValueError("gamma2 and alpha must be positive")
        self._r2 = float(np.dot(self.r, self.r))
        self._s2 = float(np.dot(self.s, self.s))
        lo_inv, hi_inv = self._dinv_eig_range()
        self.d_min_eig = 1.0 / hi_inv
        self.d_max_eig = 1.0 / lo_inv
        self.mu_lower = self.d_min_eig / self.alpha
        self.norm_upper = self.d_max_eig / self.alpha

    def _dinv_eig_range(self):
        """Exact eigenvalue range of D^{-1}: gamma2 off span{s, r} plus the
        restriction to that (at most two dimensional) invariant span."""
        if self.rho == 0.0 or self._s2 == 0.0:
            return self.gamma2, self.gamma2
        q, rr = np.linalg.qr(np.column_stack([self.s, self.r]))
        keep = np.abs(np.diag(rr)) > 1e-14 * max(1.0, float(np.abs(rr).max()))
        q = q[:, keep]
        if q.shape[1] == 0:
            return self.gamma2, self.gamma2
        sub = q.T @ np.column_stack(
            [self.d_inv_apply(q[:, i]) for i in range(q.shape[1])])
        eigs = np.linalg.eigvalsh(0.5 * (sub + sub.T))
        lo, hi = float(eigs.min()), float(eigs.max())
        if q.shape[1] < self.s.size:
            lo, hi = min(lo, self.gamma2), max(hi, self.gamma2)
        if lo <= 0:
            raise ValueError("secant pair produced an indefinite model")
        return lo, hi

    def d_inv_apply(self, x):
        if self.rho == 0.0:
            return self.gamma2 * x
        sx = float(np.dot(self.s, x))
        rx = float(np.dot(self.r, x))
        core = x - self.rho * sx * self.r - self.rho * rx * self.s \
            + (self.rho**2) * self._r2 * sx * self.s
        return self.gamma2 * core + self.rho * sx * self.s

    def d_apply(self, x):
        if self.rho == 0.0:
            return x / self.gamma2
        sx = float(np.dot(self.s, x))
        rx = float(np.dot(self.r, x))
        return (x - (sx / self._s2) * self.s) / self.gamma2 + rx * self.rho * self.r

    def apply(self, v):
        return self.d_apply(v) / self.alpha

    def inv_apply(self, v):
        return self.alpha * self.d_inv_apply(v)


def build_hessian_metric(p, x):
    """Clipped-curvature metric for a separable smooth loss."""

    if not getattr(p.theta, "separable", False):
        raise UnsupportedOperation("Hessian metric requires a separable loss")
    w = np.maximum(p.theta.hess_diag(p.A_op.apply(x)), 0.0)
    return HessianMetric(p.A_op, w, p.mu_lower)


def build_sg_metric(p, x, alpha, eps_bar=1e-10):
    """Split-gradient diagonal metric ``G = D / alpha``.

    ``D^{-1}`` entries are ``clip(x / (V(x) + eps_bar), mu, 1/mu)``; alpha is
    additionally capped so ``G >= mu I`` always holds.
    """

    if p.sg_split is None:
        raise UnsupportedOperation("no gradient split registered for this problem")
    V = np.asarray(p.sg_split(x), dtype=float)
    if np.any(V <= 0):
        raise ValueError("gradient split must have a strictly positive V part")
    mu = p.mu_lower
    d_inv = np.clip(x / (V + eps_bar), mu, 1.0 / mu)
    d = 1.0 / d_inv
    alpha = min(float(alpha), float(d.min()) / mu)
    return DiagonalMetric(d / alpha)


def build_bfgs0_metric(s, r, prev, c1, c2, alpha, mu=1e-5, cond_cap=1e6):
    """BFGS0 metric from the secant pair ``(s, r)``; falls back to ``prev``.

    The safeguards ``c1 <= gamma_bb2`` and ``gamma_bb1 <= c2`` (with
    ``gamma_bb2 <= gamma_bb1`` automatic for a positive pair) keep the family
    uniformly bounded; degenerate curvature carries the previous shape
    forward. ``cond_cap`` additionally rejects near-orthogonal pairs
    (``gamma_bb1/gamma_bb2`` equals the squared secant of the angle between
    s and r) whose rank-two model is too ill conditioned for reliable gap
    certificates in double precision. ``alpha`` is capped so the scaled
    metric stays above ``mu I``.
    """

    s = np.asarray(s, dtype=float)
    r = np.asarray(r, dtype=float)
    shape = None
    rs = float(np.dot(r, s))
    if rs > 0:
        rho = 1.0 / rs
        gbb1 = rho * float(np.dot(s, s))
        gbb2 = 1.0 / (rho * float(np.dot(r, r)))
        if c1 <= gbb2 and gbb1 <= c2 and gbb1 <= cond_cap * gbb2:
            shape = (gbb2, rho, s, r)
    if shape is None:
        if prev is None:
            shape = (1.0, 0.0, np.zeros_like(s), np.zeros_like(r))
        else:
            shape = (prev.gamma2, prev.rho, prev.s, prev.r)
    probe = Bfgs0Metric(*shape, alpha=1.0)
    return Bfgs0Metric(*shape, alpha=min(float(alpha), probe.d_min_eig / mu))


def power_norm_estimate(apply_fn, dim, iters=30, seed=0):
    """Rayleigh-quotient estimate of the spectral norm of a PSD operator."""

    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = apply_fn(v)
        lam = float(np.dot(v, w))
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v = w / nw
    return lam


class ScaledBBStepper:
    """Alternating D-weighted Barzilai-Borwein step lengths.

    The iterate moves by ``alpha * D^{-1} grad``, so the secant fits are
    ``a1 = <D s, D s> / <D s, r>`` and ``a2 = <s, D^{-1} r> / |D^{-1} r|^2``;
    when D captures the local curvature both reduce to one. An adaptive
    threshold alternates the two rules with a short memory of small steps;
    results are clamped to ``[lo, hi]``.
    """

    def __init__(self, alpha0=1.0, lo=1e-5, hi=1e5, nc_cap=1e3, memory=3):
        self.alpha = float(alpha0)
        self.lo = lo
        self.hi = hi
        self.nc_cap = nc_cap
        self.tau = 0.5
        self.mem = []
        self.memory = memory

    def update(self, s, r, d_apply, d_inv_apply):
        sr = float(np.dot(s, r))
        if sr <= 0 or not np.isfinite(sr):
            # negative curvature along the step: lengthen rather than freeze,
            # but moderately, to keep the dual subproblem well conditioned
            self.alpha = min(self.alpha * 2.0, self.nc_cap)
            return self.alpha
        ds = d_apply(s)
        dr = d_inv_apply(r)
        den1 = float(np.dot(ds, r))
        num2 = float(np.dot(s, dr))
        den2 = float(np.dot(dr, dr))
        # a non-positive fit carries no curvature signal: fall back long
        a1 = float(np.dot(ds, ds)) / den1 if den1 > 0 else self.hi
        a2 = num2 / den2 if (den2 > 0 and num2 > 0) else self.hi
        a1 = float(np.clip(a1, self.lo, self.hi))
        a2 = float(np.clip(a2, self.lo, self.hi))
        self.mem.append(a2)
        if len(self.mem) > self.memory:
            self.mem.pop(0)
        if a2 / max(a1, 1e-300) < self.tau:
            self.alpha = min(self.mem)
            self.tau *= 0.9
        else:
            self.alpha = a1
            self.tau *= 1.1
        return self.alpha
