"""Closed-form proximal mappings, Moreau identities and envelopes.

Conventions: every prox callable takes ``(v, t)`` and returns the minimizer
of ``0.5 ||z - v||^2 + t * h(z)``. Steps are floored at 1e-300; ``t <= 0``
raises.
"""

from __future__ import annotations

import numpy as np

_T_FLOOR = 1e-300


def _check_step(t):
    if t <= 0:
        raise ValueError("prox step must be positive")
    return max(float(t), _T_FLOOR)


def soft_threshold(v, a):
    return np.sign(v) * np.maximum(np.abs(v) - a, 0.0)


def prox_weighted_l1(v, t, w):
    """Elementwise soft threshold at ``t * w`` with non-negative weights."""

    t = _check_step(t)
    w = np.asarray(w, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    return soft_threshold(np.asarray(v, dtype=float), t * w)


def prox_nonneg(v):
    return np.maximum(np.asarray(v, dtype=float), 0.0)


def prox_conj_via_moreau(prox_h, v, t):
    """Moreau decomposition: ``prox_{t h*}(v) = v - t prox_{h/t}(v / t)``."""

    t = _check_step(t)
    v = np.asarray(v, dtype=float)
    return v - t * prox_h(v / t, 1.0 / t)


def prox_g2_tilde_conj(g2_prox, mu, v, t):
    """Prox of the conjugate of the strongly convex shift ``g2 + mu/2 |.|^2``.

    Uses ``prox_{s(g2 + mu/2|.|^2)}(u) = prox_{(s/(1+s mu)) g2}(u / (1+s mu))``
    inside the Moreau decomposition.
    """

    t = _check_step(t)
    if mu <= 0:
        raise ValueError("mu must be positive")

    def shifted(u, s):
        c = 1.0 + s * mu
        return g2_prox(u / c, s / c)

    return prox_conj_via_moreau(shifted, v, t)


def prox_tv_iso_conj(z, nu, shape):
    """Pixel-wise projection of stacked (dh, dv) pairs onto balls of radius nu."""

    if nu <= 0:
        raise ValueError("nu must be positive")
    m, n = shape
    z = np.asarray(z, dtype=float)
    if z.size != 2 * m * n:
        raise ValueError("stacked pair layout mismatch")
    a, b = z[: m * n], z[m * n :]
    norms = np.hypot(a, b)
    scale = nu / np.maximum(norms, nu)
    return np.concatenate([a * scale, b * scale])


def prox_fused_1d(v, lam):
    """Exact prox of ``lam * sum |z_i - z_{i+1}|`` by the taut-string method.

    Walks the tube of half-width lam around the cumulative sums and emits
    maximal straight segments; ties at exact thresholds merge segments, so
    the output is deterministic.
    """

    v = np.asarray(v, dtype=float)
    n = v.size
    if lam < 0:
        raise ValueError("lam must be non-negative")
    if n <= 1 or lam == 0.0:
        return v.copy()
    cum = np.concatenate([[0.0], np.cumsum(v)])
    x = np.empty(n)
    a = 0
    va = 0.0
    while a < n:
        min_up = np.inf
        max_lo = -np.inf
        k_up = a
        k_lo = a
        bend = None
        for k in range(a + 1, n + 1):
            if k < n:
                su = (cum[k] + lam - va) / (k - a)
                sl = (cum[k] - lam - va) / (k - a)
            else:
                su = sl = (cum[n] - va) / (n - a)
            if sl > min_up:
                bend = (k_up, min_up)
                break
            if su < max_lo:
                bend = (k_lo, max_lo)
                break
            if su <= min_up:
                min_up = su
                k_up = k
            if sl >= max_lo:
                max_lo = sl
                k_lo = k
        if bend is None:
            x[a:n] = (cum[n] - va) / (n - a)
            break
        j, s = bend
        x[a:j] = s
        va += s * (j - a)
        a = j
    return x


def moreau_env_grad(prox_h, h_value, v, t):
    """Value and gradient of the Moreau envelope ``e_{t h}`` at v.

    ``h_value`` evaluates h itself (needed for the envelope value); passing
    None raises, since the prox alone cannot produce the value.
    """

    t = _check_step(t)
    if h_value is None:
        raise ValueError("moreau_env_grad needs a value oracle for h")
    v = np.asarray(v, dtype=float)
    p = prox_h(v, t)
    diff = v - p
    val = h_value(p) + float(np.dot(diff, diff)) / (2.0 * t)
    return val, diff / t
