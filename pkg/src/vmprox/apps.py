"""Benchmark problem families: Cauchy-noise deblurring and fused weighted
lasso, plus their data generators, readers and evaluation statistics.

All randomness flows through the counter-based Philox generator with
inverse-CDF sampling only, so instances are bit-reproducible from
``(kind, dims, seed)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.signal import lfilter
from scipy.special import ndtri, stdtrit

from .problem import (CauchyLoss, ChainDiff1D, CompositeProblem,
                      GaussianBlur2D, GridDiff2D, IsoTV2D, L1Norm,
                      MatrixOp, NonnegIndicator, StudentTLoss, WeightedL1)


def make_rng(seed):
    """Counter-based generator; the only PRNG used by this package."""

    return np.random.Generator(np.random.Philox(key=np.uint64(seed)))


def gaussian_kernel(size=9, sigma2=1.0):
    """Normalized 2-D Gaussian kernel (sum one), matching the usual
    ``size x size`` test kernel with the given variance."""

    r = size // 2
    g = np.exp(-np.arange(-r, r + 1) ** 2 / (2.0 * sigma2))
    k = np.outer(g, g)
    return k / k.sum()


def add_cauchy_noise(img, gamma, seed):
    """Additive i.i.d. Cauchy(0, gamma) noise via the inverse CDF."""

    if gamma <= 0:
        raise ValueError("gamma must be positive")
    img = np.asarray(img, dtype=float)
    u = make_rng(seed).random(img.size).reshape(img.shape)
    return img + gamma * np.tan(np.pi * (u - 0.5))


# ---------------------------------------------------------------------------
# deblurring under Cauchy noise
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DeblurInstance:
    clean: np.ndarray            # m x n image in [0, 1]
    kernel: np.ndarray
    observed: np.ndarray         # blurred + noisy, m x n
    gamma: float
    nu: float
    seed: int


def make_deblur_instance(clean, gamma=0.02, nu=1.0 / 0.35, seed=0,
                         kernel_size=9, kernel_sigma2=1.0):
    clean = np.asarray(clean, dtype=float)
    kernel = gaussian_kernel(kernel_size, kernel_sigma2)
    blur = GaussianBlur2D(clean.shape, kernel)
    blurred = blur.apply(clean.ravel()).reshape(clean.shape)
    observed = add_cauchy_noise(blurred, gamma, seed)
    return DeblurInstance(clean=clean, kernel=kernel, observed=observed,
                          gamma=gamma, nu=nu, seed=seed)


def build_deblur_problem(inst: DeblurInstance):
    """Wire the composite model; returns (problem, x0 = max(0, observed))."""

    shape = inst.clean.shape
    blur = GaussianBlur2D(shape, inst.kernel)
    b = inst.observed.ravel()
    theta = CauchyLoss(b, inst.gamma)
    g2 = NonnegIndicator()
    g1 = IsoTV2D(inst.nu, shape)
    b_op = GridDiff2D(shape)
    gamma2 = inst.gamma**2

    def sg_split(x):
        ax = blur.apply(x)
        return blur.adjoint(ax / (gamma2 + (ax - b) ** 2))

    p = CompositeProblem(theta=theta, A_op=blur, g1=g1, B_op=b_op, g2=g2,
                         mu_lower=1e-5, sg_split=sg_split)
    x0 = np.maximum(b, 0.0)
    return p, x0


def psnr(x, ref):
    """Peak signal-to-noise ratio in dB, unit peak, capped at 99."""

    x = np.asarray(x, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if x.shape != ref.shape:
        raise ValueError("image shapes differ")
    mse = float(np.mean((x - ref) ** 2))
    if mse == 0.0:
        return 99.0
    return min(10.0 * np.log10(1.0 / mse), 99.0)


# ---------------------------------------------------------------------------
# fused weighted lasso
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LassoInstance:
    A: object                    # dense array or scipy sparse
    b: np.ndarray
    omega: np.ndarray
    nu1: float
    nu2: float
    gamma: float
    seed: int
    x_true: Optional[np.ndarray] = None


def build_fused_lasso_problem(inst: LassoInstance):
    """Wire the composite model; returns (problem, x0 = A^T b)."""

    a_op = MatrixOp(inst.A)
    n = a_op.shape_in
    theta = StudentTLoss(inst.b, inst.gamma)
    g1 = L1Norm(inst.nu1)
    b_op = ChainDiff1D(n)
    g2 = WeightedL1(inst.nu2, inst.omega)
    p = CompositeProblem(theta=theta, A_op=a_op, g1=g1, B_op=b_op, g2=g2,
                         mu_lower=1e-5, sg_split=None)
    x0 = a_op.adjoint(inst.b)
    return p, x0


_TRUTH_BLOCK = np.array(
    [0, 0, -1.5, -1.5, -2, -2, 0, 0, 1, 1, 4, 4, 4] + [0] * 237, dtype=float)


def truth_pattern(n):
    """The 250-periodic ground truth, tiled (and truncated) to length n."""

    reps = int(np.ceil(n / _TRUTH_BLOCK.size))
    return np.tile(_TRUTH_BLOCK, reps)[:n]


def _noise_sample(kind, u):
    if kind == "I":
        return 2.0 * ndtri(u)
    if kind == "II":
        return np.sqrt(2.0) * stdtrit(4, u)
    if kind == "III":
        sigma = 1.0 + 4.0 * u[0::2]
        return sigma * ndtri(u[1::2])
    if kind == "IV":
        return np.where(u < 0.5, np.log(2.0 * u), -np.log(2.0 * (1.0 - u)))
    raise ValueError("unknown noise kind %r" % (kind,))


_SIGMA_KINDS = {"a": 0.3, "b": 0.5}


def gen_synthetic(m, n, sigma_kind="a", noise_kind="I", sparsity=0.3, seed=0,
                  alpha1=5e-7, alpha2=5e-4, gamma=0.1):
    """Synthetic regression instance with AR(1)-correlated rows and sparse
    heavy-tailed noise; reproducible bit-for-bit from the seed."""

    if sigma_kind not in _SIGMA_KINDS:
        raise ValueError("unknown covariance kind %r" % (sigma_kind,))
    r = _SIGMA_KINDS[sigma_kind]
    rng = make_rng(seed)

    z = ndtri(rng.random((m, n)))
    scaled = z * np.sqrt(1.0 - r * r)
    scaled[:, 0] = z[:, 0]
    A = lfilter([1.0], [1.0, -r], scaled, axis=1)

    x_true = truth_pattern(n)
    k_noise = int(np.floor(sparsity * m))
    positions = rng.permutation(m)[:k_noise]
    n_uniform = 2 * k_noise if noise_kind == "III" else k_noise
    values = _noise_sample(noise_kind, rng.random(n_uniform))
    noise = np.zeros(m)
    noise[positions] = values
    b = A @ x_true + noise

    omega = np.where(x_true == 0.0, 0.9, 0.1)
    scale = float(np.max(np.abs(A.T @ b)))
    return LassoInstance(A=A, b=b, omega=omega, nu1=alpha1 * scale,
                         nu2=alpha2 * scale, gamma=gamma, seed=seed,
                         x_true=x_true)


def count_nonzeros(x):
    """Smallest k whose largest-magnitude prefix holds 99.9% of the l1 mass."""

    x = np.asarray(x, dtype=float)
    total = float(np.sum(np.abs(x)))
    if total == 0.0:
        return 0
    mags = np.sort(np.abs(x))[::-1]
    prefix = np.cumsum(mags)
    return int(np.searchsorted(prefix, 0.999 * total) + 1)


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------


class LibsvmFormatError(ValueError):
    pass


def read_libsvm(path):
    """Sparse text rows ``label idx:val ...`` with 1-based ascending indices.

    Returns (csr_matrix, labels). Malformed lines raise with their line
    number.
    """

    labels = []
    indptr = [0]
    indices = []
    data = []
    n_features = 0
    with open(path, "r", encoding="ascii") as handle:
        for lineno, line in enumerate(handle, start=1):
            parts = line.split()
            if not parts:
                continue
            try:
                labels.append(float(parts[0]))
            except ValueError:
                raise LibsvmFormatError(
                    "line %d: bad label %r" % (lineno, parts[0]))
            prev = 0
            for tok in parts[1:]:
                try:
                    idx_s, val_s = tok.split(":", 1)
                    idx = int(idx_s)
                    val = float(val_s)
                except ValueError:
                    raise LibsvmFormatError(
                        "line %d: bad feature token %r" % (lineno, tok))
                if idx <= prev:
                    raise LibsvmFormatError(
                        "line %d: indices not ascending at %r" % (lineno, tok))
                prev = idx
                indices.append(idx - 1)
                data.append(val)
            indptr.append(len(indices))
            n_features = max(n_features, prev)
    mat = sp.csr_matrix((data, indices, indptr),
                        shape=(len(labels), n_features))
    return mat, np.array(labels)


def expand_polynomial(X, order):
    """All monomials of total degree <= order over the input columns.

    Dense output; intended as the feature-expansion hook for small-feature
    datasets (order matches the digit suffix convention of their names).
    """

    X = np.asarray(X, dtype=float) if not sp.issparse(X) else X.toarray()
    m, d = X.shape
    cols = [np.ones(m)]
    for deg in range(1, order + 1):
        for combo in itertools.combinations_with_replacement(range(d), deg):
            col = np.ones(m)
            for j in combo:
                col = col * X[:, j]
            cols.append(col)
    return np.column_stack(cols)


def read_pgm(path):
    """Binary 8-bit PGM (P5); returns floats scaled to [0, 1]."""

    with open(path, "rb") as handle:
        data = handle.read()
    tokens = []
    i = 0
    while len(tokens) < 4:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if data[i : i + 1] == b"#":
            while i < len(data) and data[i : i + 1] != b"\n":
                i += 1
            continue
        start = i
        while i < len(data) and not data[i : i + 1].isspace():
            i += 1
        tokens.append(data[start:i])
    if tokens[0] != b"P5":
        raise ValueError("not a binary PGM file")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise ValueError("only 8-bit PGM supported")
    i += 1
    pixels = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=i)
    return pixels.reshape(height, width).astype(float) / 255.0


def write_pgm(path, img):
    img = np.asarray(img, dtype=float)
    pixels = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    header = b"P5\n%d %d\n255\n" % (img.shape[1], img.shape[0])
    with open(path, "wb") as handle:
        handle.write(header)
        handle.write(pixels.tobytes())
