"""Shared independent oracles: brute-force proxes, dense subproblem
references, finite differences. Everything here solves a different
formulation than the library code it checks."""

import numpy as np
import scipy.optimize as so

from vmprox.problem import (ChainDiff1D, CompositeProblem, IdentityOp,
                            L1Norm, MatrixOp, QuadraticLoss, WeightedL1,
                            ZeroFun)
from vmprox import apps


def fd_grad(fun, x, h=1e-6):
    """Central finite differences."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        out[i] = (fun(x + e) - fun(x - e)) / (2 * h)
    return out


def prox_bruteforce_small(v, t, h_value, bounds_scale=None):
    """Prox of an arbitrary h on dim <= 6 by direct minimization.

    Polished Nelder-Mead from several starts; good to ~1e-8 on the smooth
    pieces used in the tests.
    """

    v = np.asarray(v, dtype=float)

    def obj(z):
        return 0.5 * float(np.dot(z - v, z - v)) + t * h_value(z)

    best = None
    for start in (v, np.zeros_like(v), 0.5 * v):
        res = so.minimize(obj, start, method="Nelder-Mead",
                          options={"xatol": 1e-12, "fatol": 1e-14,
                                   "maxiter": 40000, "maxfev": 40000})
        if best is None or res.fun < best.fun:
            best = res
    return best.x, best.fun


def prox_separable_bruteforce(v, t, h_scalar, kinks=(0.0,)):
    """Exact prox of a separable h by bounded scalar minimization.

    Bounded Brent per coordinate plus explicit kink candidates (Brent only
    reaches ~sqrt(eps) accuracy when the minimizer sits on a kink).
    """

    v = np.asarray(v, dtype=float)
    out = np.empty_like(v)
    for i, vi in enumerate(v):
        span = abs(vi) + 10.0 * (1.0 + t)

        def obj(z):
            return 0.5 * (z - vi) ** 2 + t * h_scalar(z, i)

        res = so.minimize_scalar(obj, bounds=(vi - span, vi + span),
                                 method="bounded", options={"xatol": 1e-13})
        x = res.x
        # bounded Brent stops at ~sqrt(eps); a parabolic fit through three
        # nearby points is exact where the objective is locally quadratic
        delta = 1e-5 * (1.0 + abs(x))
        if all(abs(x - k) > 10 * delta for k in kinks):
            fm, f0, fp = obj(x - delta), obj(x), obj(x + delta)
            denom = fp - 2 * f0 + fm
            if denom > 0:
                x = x - delta * (fp - fm) / (2 * denom)
        cands = [x] + list(kinks)
        out[i] = min(cands, key=obj)
    return out


def fused_reference_exact(v, lam):
    """Machine-precision 1-D TV prox: box-dual solve, then an exact
    segment polish (segment values recovered from the chain multipliers)."""

    v = np.asarray(v, dtype=float)
    n = v.size
    z = prox_fused_weighted_dual(v, 1.0, lam, np.zeros(n))
    # segment the approximate solution, then recompute values exactly
    breaks = np.flatnonzero(np.abs(np.diff(z)) > 1e-6)
    starts = np.concatenate([[0], breaks + 1])
    ends = np.concatenate([breaks, [n - 1]])
    u = np.zeros(n + 1)  # chain multipliers, u_0 = u_n = 0
    for b in breaks:
        u[b + 1] = lam * np.sign(z[b] - z[b + 1])
    out = np.empty(n)
    for a, b in zip(starts, ends):
        val = (v[a:b + 1].sum() - (u[b + 1] - u[a])) / (b - a + 1)
        out[a:b + 1] = val
    return out


def prox_fused_weighted_dual(v, t, nu1, nu2_w, B=None):
    """Exact prox of ``t (nu1 |B z|_1 + sum nu2_w |z|)`` via the box dual.

    Solves ``min 0.5 |v - B^T u - s|^2`` over the scaled boxes with
    L-BFGS-B, then recovers ``z = v - B^T u - s``. Independent of the
    package's inner solvers.
    """

    v = np.asarray(v, dtype=float)
    n = v.size
    if B is None:
        B = ChainDiff1D(n).dense()
    mB = B.shape[0]
    ub1 = np.full(mB, t * nu1)
    ub2 = t * np.asarray(nu2_w, dtype=float)

    def fun(uv):
        u, s = uv[:mB], uv[mB:]
        c = v - B.T @ u - s
        return 0.5 * float(c @ c), np.concatenate([-(B @ c), -c])

    bounds = [(-a, a) for a in ub1] + [(-a, a) for a in ub2]
    res = so.minimize(fun, np.zeros(mB + n), jac=True, method="L-BFGS-B",
                      bounds=bounds,
                      options={"maxiter": 100000, "ftol": 1e-18, "gtol": 1e-14})
    u, s = res.x[:mB], res.x[mB:]
    return v - B.T @ u - s


def make_prox_g_oracle(p):
    """Full-g prox oracle ``(v, t) -> z`` for fused weighted-lasso problems."""

    B = p.B_op.dense()
    nu1 = p.g1.nu
    nu2_w = p.g2.thresholds

    def prox_g(v, t=1.0):
        return prox_fused_weighted_dual(v, t, nu1, nu2_w, B)

    return prox_g


def solve_theta_reference(sub, tol=1e-14):
    """Dense reference minimizer of the subproblem model via its box dual.

    Requires the fused weighted-lasso structure (two box-dual blocks) and a
    dense metric; solved by L-BFGS-B to high accuracy.
    """

    p = sub.problem
    n = sub.x_k.size
    G = np.column_stack([sub.metric.apply(np.eye(n)[:, i]) for i in range(n)])
    Ginv = np.linalg.inv(G)
    B = p.B_op.dense()
    mB = B.shape[0]
    bk = sub.b_k
    if isinstance(p.g1, L1Norm):
        ub1 = np.full(mB, p.g1.nu)
    else:
        raise NotImplementedError
    if isinstance(p.g2, WeightedL1):
        lo2, hi2 = -p.g2.thresholds, p.g2.thresholds
    elif isinstance(p.g2, ZeroFun):
        lo2, hi2 = np.zeros(n), np.zeros(n)
    else:  # non-negativity: conjugate support lives on the nonpositive cone
        lo2, hi2 = np.full(n, -np.inf), np.zeros(n)

    def fun(uv):
        u, s = uv[:mB], uv[mB:]
        c = bk - B.T @ u - s
        gc = Ginv @ c
        return 0.5 * float(c @ gc), np.concatenate([-(B @ gc), -gc])

    bounds = [(-a, a) for a in ub1] + list(zip(lo2, hi2))
    res = so.minimize(fun, np.zeros(mB + n), jac=True, method="L-BFGS-B",
                      bounds=bounds,
                      options={"maxiter": 200000, "ftol": tol, "gtol": 1e-14})
    u, s = res.x[:mB], res.x[mB:]
    z = Ginv @ (bk - B.T @ u - s)
    return p.domain_project(z)


def toy_problem():
    """f = 0.5 (x-2)^2, g = |x|; optimum x*=1 with F*=1.5."""

    p = CompositeProblem(theta=QuadraticLoss(np.array([2.0])),
                         A_op=IdentityOp(1), g1=ZeroFun(), B_op=IdentityOp(1),
                         g2=WeightedL1(1.0, np.ones(1)), mu_lower=1e-5)
    return p, np.zeros(1)


def small_lasso(m, n, seed, alpha1=1e-3, alpha2=1e-2, gamma=0.5):
    inst = apps.gen_synthetic(m, n, "a", "I", seed=seed, alpha1=alpha1,
                              alpha2=alpha2, gamma=gamma)
    return apps.build_fused_lasso_problem(inst)


def quadratic_fused_problem(n, seed, nu1=0.3, nu2=0.2):
    """Strongly convex instance: quadratic loss with well conditioned A."""

    rng = np.random.default_rng(seed)
    A = np.eye(n) + 0.1 * rng.standard_normal((n, n))
    b = rng.standard_normal(n) * 2.0
    w = rng.random(n) * 0.8 + 0.2
    p = CompositeProblem(theta=QuadraticLoss(b), A_op=MatrixOp(A),
                         g1=L1Norm(nu1), B_op=ChainDiff1D(n),
                         g2=WeightedL1(nu2, w), mu_lower=1e-5)
    return p, A.T @ b * 0.1


def fused_kkt_violation(v, lam, x):
    """Max KKT violation of the 1-D TV prox solution x at input v."""

    v = np.asarray(v, dtype=float)
    x = np.asarray(x, dtype=float)
    u = -np.cumsum(x - v)[:-1]  # dual chain from stationarity
    tail = abs(float(np.sum(x - v)))
    box = float(np.max(np.abs(u) - lam, initial=0.0))
    jump = 0.0
    for i in range(x.size - 1):
        d = x[i] - x[i + 1]
        if abs(d) > 1e-9:
            jump = max(jump, abs(u[i] - lam * np.sign(d)))
    return max(tail, box, jump)
