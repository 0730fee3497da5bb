"""Frozen per-iteration subproblem data shared by both inner solvers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class ProxSubproblem:
    """Data of the strongly convex model around ``x_k``.

    ``b_k = G x_k - grad_k`` is formed without inverting G, and
    ``C_k = 0.5 <x_k, G x_k> + f(x_k) - <grad_k, x_k>`` so that the model
    value at ``x_k`` equals ``F(x_k)`` exactly.
    """

    problem: object
    x_k: np.ndarray
    grad_k: np.ndarray
    metric: object
    eps_k: float
    f_xk: float
    F_xk: float
    b_k: np.ndarray = field(init=False)
    C_k: float = field(init=False)
    noise_scale: float = field(init=False)

    def __post_init__(self):
        gx = self.metric.apply(self.x_k)
        self.b_k = gx - self.grad_k
        quad = 0.5 * float(np.dot(self.x_k, gx))
        lin = float(np.dot(self.grad_k, self.x_k))
        self.C_k = quad + self.f_xk - lin
        # magnitude of the quantities cancelled inside gap arithmetic;
        # floating-point certificates cannot resolve below eps * this
        self.noise_scale = 1.0 + abs(self.f_xk) + abs(self.F_xk) \
            + abs(quad) + abs(lin)

    def theta(self, z):
        """Model value: linearized f plus metric quadratic plus g."""
        d = z - self.x_k
        quad = 0.5 * float(np.dot(d, self.metric.apply(d)))
        return self.f_xk + float(np.dot(self.grad_k, d)) + quad + self.problem.g(z)

    def dist2(self, z):
        d = z - self.x_k
        return float(np.dot(d, d))


def make_subproblem(p, x_k, grad_k, metric, eps_k, f_xk=None, F_xk=None):
    if f_xk is None:
        f_xk = p.f(x_k)
    if F_xk is None:
        F_xk = f_xk + p.g(x_k)
    return ProxSubproblem(p, np.asarray(x_k, dtype=float),
                          np.asarray(grad_k, dtype=float), metric,
                          float(eps_k), float(f_xk), float(F_xk))


@dataclass
class InnerSolveResult:
    y: np.ndarray
    gap: float
    theta_y: float
    dist2: float
    inner_iters: int
    certified: bool
    degenerate: bool = False
    warm: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)
    weak_duality_violations: int = 0


def vmipg_acceptor(sub):
    """Gap test of the distance-controlled inexactness rule."""

    def accept(theta_z, gap, dist2):
        return theta_z < sub.F_xk and gap <= sub.eps_k * dist2

    return accept


def vmila_acceptor(sub, tau_k):
    """Gap test of the decrease-controlled (comparison-mode) rule."""

    def accept(theta_z, gap, dist2):
        return theta_z < sub.F_xk and gap <= 0.5 * tau_k * (sub.F_xk - theta_z)

    return accept
