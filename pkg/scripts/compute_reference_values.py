"""Offline reference computation for the regression acceptance check.

For each benchmark seed this runs a tiny-step proximal-gradient iteration
(1e6 steps) whose prox-of-g oracle is an exact box-dual solve (warm-started
projected accelerated gradient on the dual, run to a fixed-point residual
near machine precision). The resulting objective values are frozen into
tests/frozen_references.py.

Usage: python scripts/compute_reference_values.py [--iters N] [--seeds a b ...]
"""

import argparse
import sys
import time

import numpy as np

sys.path.insert(0, "src")

from vmprox import apps  # noqa: E402
from vmprox.problem import ChainDiff1D  # noqa: E402

M, N = 20, 50
ALPHA1, ALPHA2, GAMMA = 1e-3, 1e-2, 0.5
SEEDS = list(range(100, 120))


class WarmDualProx:
    """Exact prox of ``t (nu1 |Bz|_1 + sum w_i |z_i|)`` by its box dual.

    Accelerated projected gradient with restart on the dual least-squares
    problem; warm-started across calls, run until the projected fixed-point
    residual is at rounding level.
    """

    def __init__(self, n, nu1, nu2_w):
        self.B = ChainDiff1D(n)
        self.nu1 = nu1
        self.nu2_w = np.asarray(nu2_w, dtype=float)
        self.u = np.zeros(n - 1)
        self.s = np.zeros(n)
        self.L = self.B.norm2_bound() + 1.0

    def __call__(self, v, t, tol=1e-13, max_iter=20000):
        ub1 = t * self.nu1
        ub2 = t * self.nu2_w
        u, s = np.clip(self.u, -ub1, ub1), np.clip(self.s, -ub2, ub2)
        up, sp = u.copy(), s.copy()
        tm = 1.0
        step = 1.0 / self.L
        scale = 1.0 + float(np.linalg.norm(v))

        def converged(u, s):
            c = v - self.B.adjoint(u) - s
            ru = u - np.clip(u + step * self.B.apply(c), -ub1, ub1)
            rs = s - np.clip(s + step * c, -ub2, ub2)
            return max(np.abs(ru).max(initial=0), np.abs(rs).max(initial=0)) \
                <= tol * scale

        for j in range(max_iter):
            # warm starts usually satisfy the fixed point immediately
            if (j < 5 or j % 10 == 0) and converged(u, s):
                break
            tn = 0.5 * (1 + np.sqrt(1 + 4 * tm * tm))
            au = u + ((tm - 1) / tn) * (u - up)
            as_ = s + ((tm - 1) / tn) * (s - sp)
            c = v - self.B.adjoint(au) - as_
            gu = -self.B.apply(c)
            gs = -c
            nu = np.clip(au - step * gu, -ub1, ub1)
            ns = np.clip(as_ - step * gs, -ub2, ub2)
            up, sp, u, s, tm = u, s, nu, ns, tn
        self.u, self.s = u, s
        return v - self.B.adjoint(u) - s


def reference_objective(seed, iters):
    inst = apps.gen_synthetic(M, N, "a", "I", seed=seed, alpha1=ALPHA1,
                              alpha2=ALPHA2, gamma=GAMMA)
    p, x0 = apps.build_fused_lasso_problem(inst)
    A = np.asarray(inst.A)
    lips = (2.0 / GAMMA) * np.linalg.norm(A, 2) ** 2
    t = 0.25 / lips
    prox = WarmDualProx(N, p.g1.nu, p.g2.thresholds)
    x = x0.copy()
    for _ in range(iters):
        x = prox(x - t * p.grad_f(x), t)
    return p.F(x)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--iters", type=int, default=1000000)
    ap.add_argument("--seeds", type=int, nargs="*", default=SEEDS)
    args = ap.parse_args()
    print("# generated by scripts/compute_reference_values.py")
    print("REGRESSION_REFERENCE_F = {")
    for seed in args.seeds:
        t0 = time.time()
        val = reference_objective(seed, args.iters)
        print("    %d: %.16g,  # %.0fs" % (seed, val, time.time() - t0))
        sys.stdout.flush()
    print("}")


if __name__ == "__main__":
    main()
