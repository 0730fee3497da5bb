"""Deblurring benchmark wrapper: all six solvers on one image, paper-style
protocol, averaged over trials.

Example:
    python scripts/run_deblur.py data/cameraman.pgm --trials 10 --jobs 2
"""

import sys

sys.path.insert(0, "src")

from vmprox.cli import main  # noqa: E402

if __name__ == "__main__":
    image = sys.argv[1] if len(sys.argv) > 1 else "data/cameraman.pgm"
    extra = sys.argv[2:]
    argv = ["deblur", "--image", image,
            "--solver", "vmipg-h,vmipg-s,vmipg-bfgs,vmila-h,vmila-s,vmila-bfgs",
            "--out-dir", "runs/deblur"] + extra
    sys.exit(main(argv))
