import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vmprox import apps
from vmprox.problem import adjoint_mismatch


def test_gaussian_kernel_normalized_and_symmetric():
    k = apps.gaussian_kernel(9, 1.0)
    assert k.shape == (9, 9)
    assert k.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.allclose(k, k.T)
    assert np.allclose(k, k[::-1, ::-1])


def test_cauchy_noise_reproducible_and_centered():
    img = np.zeros((1000, 1000))
    a = apps.add_cauchy_noise(img, 0.02, seed=7)
    b = apps.add_cauchy_noise(img, 0.02, seed=7)
    assert np.array_equal(a, b)
    assert abs(np.median(a)) < 0.01
    c = apps.add_cauchy_noise(img, 0.02, seed=8)
    assert not np.array_equal(a, c)
    with pytest.raises(ValueError):
        apps.add_cauchy_noise(img, 0.0, seed=1)


def test_inverse_cdf_center_maps_to_zero():
    # the median uniform maps through tan(pi (u - 1/2)) to exactly zero
    assert 0.02 * np.tan(np.pi * (0.5 - 0.5)) == 0.0


def test_deblur_problem_wiring():
    img = np.clip(np.random.default_rng(0).random((16, 14)), 0, 1)
    inst = apps.make_deblur_instance(img, seed=5)
    p, x0 = apps.build_deblur_problem(inst)
    rng = np.random.default_rng(1)
    assert adjoint_mismatch(p.A_op, rng, 30) < 1e-12
    assert adjoint_mismatch(p.B_op, rng, 30) < 1e-12
    assert p.in_domain(x0)
    assert np.all(x0 >= 0)
    # zero-noise, identity-blur sanity: gradient vanishes at the data
    from vmprox.problem import (CauchyLoss, CompositeProblem, GridDiff2D,
                                IdentityOp, IsoTV2D, NonnegIndicator)
    b = np.abs(np.random.default_rng(2).random(12))
    p2 = CompositeProblem(theta=CauchyLoss(b, 0.02), A_op=IdentityOp(12),
                          g1=IsoTV2D(1.0, (3, 4)), B_op=GridDiff2D((3, 4)),
                          g2=NonnegIndicator(), mu_lower=1e-5)
    assert np.allclose(p2.grad_f(b), 0.0)
    assert p2.F(b) == pytest.approx(p2.theta.value(b) + p2.g1.value(
        p2.B_op.apply(b)))


def test_sg_split_positive_on_interior():
    img = np.clip(np.random.default_rng(3).random((16, 14)) * 0.9 + 0.05, 0, 1)
    inst = apps.make_deblur_instance(img, seed=2)
    p, x0 = apps.build_deblur_problem(inst)
    V = p.sg_split(np.maximum(x0, 1e-3))
    assert np.all(V > 0)


def test_truth_pattern_nonzero_counts():
    pat = apps.truth_pattern(2500)
    assert pat.size == 2500
    block = pat[:250]
    assert np.count_nonzero(block) == 9
    assert np.count_nonzero(pat) == 90
    assert np.array_equal(pat[:13],
                          [0, 0, -1.5, -1.5, -2, -2, 0, 0, 1, 1, 4, 4, 4])


def test_gen_synthetic_structure():
    inst = apps.gen_synthetic(40, 500, "a", "I", seed=3)
    assert inst.A.shape == (40, 500)
    assert np.count_nonzero(inst.b - inst.A @ inst.x_true) == 12  # floor(0.3m)
    assert set(np.unique(inst.omega)) == {0.1, 0.9}
    assert np.all((inst.omega == 0.9) == (inst.x_true == 0))
    assert inst.nu1 > 0 and inst.nu2 > 0
    again = apps.gen_synthetic(40, 500, "a", "I", seed=3)
    assert np.array_equal(inst.A, again.A) and np.array_equal(inst.b, again.b)


def test_gen_synthetic_ar1_correlation():
    inst = apps.gen_synthetic(2500, 400, "b", "I", seed=1)
    A = inst.A
    lag1 = np.mean(A[:, 1:] * A[:, :-1])
    assert lag1 == pytest.approx(0.5, abs=0.02)
    var = A.var()
    assert var == pytest.approx(1.0, abs=0.02)
    inst_a = apps.gen_synthetic(2500, 400, "a", "I", seed=1)
    lag1_a = np.mean(inst_a.A[:, 1:] * inst_a.A[:, :-1])
    assert lag1_a == pytest.approx(0.3, abs=0.02)


@pytest.mark.parametrize("kind", ["I", "II", "III", "IV"])
def test_noise_kinds_produce_expected_sparsity(kind):
    inst = apps.gen_synthetic(50, 250, "a", kind, seed=9)
    noise = inst.b - inst.A @ inst.x_true
    assert np.count_nonzero(noise) == 15


def test_gen_synthetic_rejects_unknown_kinds():
    with pytest.raises(ValueError):
        apps.gen_synthetic(10, 250, "c", "I", seed=0)
    with pytest.raises(ValueError):
        apps.gen_synthetic(10, 250, "a", "V", seed=0)


def test_fused_lasso_problem_wiring():
    inst = apps.gen_synthetic(10, 30, "a", "II", seed=4)
    p, x0 = apps.build_fused_lasso_problem(inst)
    rng = np.random.default_rng(0)
    assert adjoint_mismatch(p.B_op, rng, 50) < 1e-12
    assert np.array_equal(x0, np.asarray(inst.A.T @ inst.b))
    # telescoping adjoint pattern
    z = np.zeros(29)
    z[0] = 1.0
    bt = p.B_op.adjoint(z)
    assert bt[0] == 1.0 and bt[1] == -1.0 and np.all(bt[2:] == 0)
    # whole space domain: projection is the identity
    v = rng.standard_normal(30)
    assert np.array_equal(p.domain_project(v), v)
    # all-ones weights reduce to the plain fused-lasso penalty
    from vmprox.problem import WeightedL1
    g2 = WeightedL1(2.0, np.ones(5))
    assert g2.value(np.ones(5)) == pytest.approx(10.0)


def test_psnr_examples():
    img = np.random.default_rng(0).random((8, 8))
    assert apps.psnr(img, img) == 99.0
    ref = np.zeros((10, 10))
    noisy = np.full((10, 10), 0.1)  # mse = 0.01
    assert apps.psnr(noisy, ref) == pytest.approx(20.0)
    noisy2 = np.full((10, 10), 0.01)  # mse = 1e-4
    assert apps.psnr(noisy2, ref) == pytest.approx(40.0)
    with pytest.raises(ValueError):
        apps.psnr(np.zeros((2, 2)), np.zeros((3, 3)))


def test_count_nonzeros_examples():
    assert apps.count_nonzeros([1.0, 0.0, 0.0]) == 1
    assert apps.count_nonzeros(np.zeros(5)) == 0
    assert apps.count_nonzeros([0.5, 0.5, 1e-9]) == 2
    assert apps.count_nonzeros([5.0]) == 1


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-100, 100, allow_nan=False), min_size=1,
                max_size=30))
def test_count_nonzeros_bounds(xs):
    x = np.array(xs)
    k = apps.count_nonzeros(x)
    assert 0 <= k <= np.count_nonzero(x)
    if np.any(x != 0):
        mags = np.sort(np.abs(x))[::-1]
        assert mags[:k].sum() >= 0.999 * np.abs(x).sum() - 1e-12


def test_read_libsvm(tmp_path):
    path = tmp_path / "toy.libsvm"
    path.write_text("1 3:0.5\n2\n-0.25 1:2 4:-1.5\n")
    A, y = apps.read_libsvm(path)
    assert A.shape == (3, 4)
    assert np.array_equal(y, [1.0, 2.0, -0.25])
    dense = A.toarray()
    assert dense[0, 2] == 0.5 and np.count_nonzero(dense[0]) == 1
    assert np.count_nonzero(dense[1]) == 0
    assert dense[2, 0] == 2.0 and dense[2, 3] == -1.5


def test_read_libsvm_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    rows = []
    vals = rng.standard_normal(6)
    rows.append("%.17g 1:%.17g 3:%.17g" % (vals[0], vals[1], vals[2]))
    rows.append("%.17g 2:%.17g 5:%.17g" % (vals[3], vals[4], vals[5]))
    path = tmp_path / "rt.libsvm"
    path.write_text("\n".join(rows) + "\n")
    A, y = apps.read_libsvm(path)
    assert y[0] == vals[0] and A[0, 0] == vals[1] and A[0, 2] == vals[2]
    assert y[1] == vals[3] and A[1, 1] == vals[4] and A[1, 4] == vals[5]


def test_read_libsvm_errors(tmp_path):
    bad = tmp_path / "bad.libsvm"
    bad.write_text("1 3:0.5\n2 nonsense\n")
    with pytest.raises(apps.LibsvmFormatError, match="line 2"):
        apps.read_libsvm(bad)
    bad2 = tmp_path / "bad2.libsvm"
    bad2.write_text("1 3:0.5 2:1.0\n")
    with pytest.raises(apps.LibsvmFormatError, match="ascending"):
        apps.read_libsvm(bad2)
    bad3 = tmp_path / "bad3.libsvm"
    bad3.write_text("x 1:1\n")
    with pytest.raises(apps.LibsvmFormatError, match="label"):
        apps.read_libsvm(bad3)


def test_expand_polynomial_counts():
    import math
    X = np.random.default_rng(0).random((4, 3))
    out = apps.expand_polynomial(X, 2)
    assert out.shape == (4, math.comb(3 + 2, 2))
    assert np.allclose(out[:, 0], 1.0)
    # a known column: x0 * x1 appears among degree-2 monomials
    found = any(np.allclose(out[:, j], X[:, 0] * X[:, 1])
                for j in range(out.shape[1]))
    assert found


def test_pgm_roundtrip(tmp_path):
    img = np.random.default_rng(0).random((9, 7))
    path = tmp_path / "img.pgm"
    apps.write_pgm(path, img)
    back = apps.read_pgm(path)
    assert back.shape == (9, 7)
    assert np.max(np.abs(back - img)) <= 0.5 / 255 + 1e-12
    exact = apps.read_pgm(path)
    apps.write_pgm(tmp_path / "img2.pgm", exact)
    assert np.array_equal(apps.read_pgm(tmp_path / "img2.pgm"), exact)


def test_deblur_instance_reproducible():
    img = np.clip(np.random.default_rng(1).random((16, 16)), 0, 1)
    a = apps.make_deblur_instance(img, seed=11)
    b = apps.make_deblur_instance(img, seed=11)
    assert np.array_equal(a.observed, b.observed)
