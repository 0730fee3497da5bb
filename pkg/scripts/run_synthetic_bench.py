"""Synthetic fused weighted-lasso grid: Hessian and BFGS solvers over the
two covariance kinds and four noise laws.

Example (paper-scale, slow):
    python scripts/run_synthetic_bench.py --m 200 --n 5000 --trials 5
Small smoke run:
    python scripts/run_synthetic_bench.py --m 20 --n 100 --trials 2 --kmax 5000
"""

import sys

sys.path.insert(0, "src")

from vmprox.cli import main  # noqa: E402

if __name__ == "__main__":
    extra = sys.argv[1:]
    status = 0
    for sigma in ("a", "b"):
        for noise in ("I", "II", "III", "IV"):
            argv = ["synthetic-bench", "--sigma-kind", sigma,
                    "--noise-kind", noise,
                    "--solver", "vmipg-h,vmipg-bfgs,vmila-h,vmila-bfgs",
                    "--out-dir", "runs/synthetic-%s%s" % (sigma, noise)] + extra
            status = max(status, main(argv))
    sys.exit(status)
