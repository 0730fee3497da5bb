# generated by scripts/compute_reference_values.py
# tiny-step proximal gradient (1e6 iterations, exact box-dual prox oracle)
# on the twenty (m, n) = (20, 50) acceptance instances, started from zero
REGRESSION_REFERENCE_F = {
    100: 6.444496935632044,
}
