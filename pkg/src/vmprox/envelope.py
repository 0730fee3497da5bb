"""Forward-backward envelope diagnostics (identity metric only).

These are test-time instruments: they need a prox oracle for the full
nonsmooth term, which exists only for small instances, and they realize the
value/gradient/critical-point identities used to sanity-check solver runs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .problem import UnsupportedOperation


@dataclass
class EnvelopeParams:
    gamma: float
    l_f_estimate: float = 1.0
    prox_g: Optional[Callable] = None  # (v, t) -> prox of the full g

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")


def _forward_backward_point(p, x, params):
    if params.prox_g is None:
        raise UnsupportedOperation("envelope diagnostics need a full-g prox oracle")
    return params.prox_g(x - params.gamma * p.grad_f(x), params.gamma)


def fb_envelope_value(p, x, params: EnvelopeParams):
    """``min_y g(y) + <grad f(x), y-x> + ||y-x||^2/(2 gamma) + f(x)``."""

    y = _forward_backward_point(p, x, params)
    d = y - x
    return p.g(y) + float(np.dot(p.grad_f(x), d)) \
        + float(np.dot(d, d)) / (2.0 * params.gamma) + p.f(x)


def fb_envelope_grad(p, x, params: EnvelopeParams):
    """``(I - gamma hess f(x)) (x - y*) / gamma`` with the identity metric."""

    y = _forward_backward_point(p, x, params)
    u = x - y
    return u / params.gamma - p.hess_f_apply(x, u)


def potential_value(p, x, y, t, params: EnvelopeParams):
    """Envelope value plus proximity and inexactness terms: the run potential."""

    if t < 0:
        raise ValueError("t must be non-negative")
    d = y - x
    return fb_envelope_value(p, x, params) \
        + 0.5 * params.l_f_estimate * float(np.dot(d, d)) + t * t
