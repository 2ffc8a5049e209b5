"""Pointwise power-law viscosity kernels and their derivatives.

The matrix kernel maps a 2x2 strain matrix P to
(|P|^2 + delta^2)^((p - 2) / 2) P with the Frobenius norm; the vector
kernel is the analogue on sliding velocities with exponent s.  Both are
smooth for delta > 0; at delta = 0 the value is still defined (zero at
the origin for p < 2) but the derivative kernels are not and reject it.

All functions broadcast over leading axes so property sweeps and
assembly run vectorized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PhysicsParams:
    """Physical and inversion parameters.

    p, s : power-law exponents, 1 < p <= 2 and 1 < s <= p.  The p = 2
        endpoint is the linear limit used for warm starts.
    delta : regularization shift, >= 0 at type level; derivative kernels
        and solvers demand > 0.
    mu0 : linear viscosity floor, > 0.
    body_force : gravity load vector (density times gravity).
    reg_rheology, reg_friction : Tikhonov weights on the gradient
        seminorms of the two coefficients, >= 0.
    rheology_min, rheology_max, friction_max : bounds of the admissible
        box, 0 < rheology_min < rheology_max and friction_max > 0.
    """

    p: float = 4.0 / 3.0
    s: float = None
    delta: float = 0.1
    mu0: float = 0.01
    body_force: tuple = (0.0, -1.0)
    reg_rheology: float = 1e-6
    reg_friction: float = 1e-6
    rheology_min: float = 0.1
    rheology_max: float = 5.0
    friction_max: float = 10.0

    def __post_init__(self):
        if self.s is None:
            object.__setattr__(self, "s", self.p)
        if not (1.0 < self.p <= 2.0):
            raise ValueError("exponent p must lie in (1, 2], got %r" % (self.p,))
        if not (1.0 < self.s <= self.p):
            raise ValueError("exponent s must lie in (1, p], got %r" % (self.s,))
        if self.delta < 0.0:
            raise ValueError("delta must be >= 0, got %r" % (self.delta,))
        if self.mu0 <= 0.0:
            raise ValueError("mu0 must be > 0, got %r" % (self.mu0,))
        if len(self.body_force) != 2:
            raise ValueError("body_force must be a 2-vector")
        if self.reg_rheology < 0.0 or self.reg_friction < 0.0:
            raise ValueError("regularization weights must be >= 0")
        if not (0.0 < self.rheology_min < self.rheology_max):
            raise ValueError("need 0 < rheology_min < rheology_max")
        if self.friction_max <= 0.0:
            raise ValueError("friction_max must be > 0")
        object.__setattr__(self, "body_force",
                           tuple(float(c) for c in self.body_force))


def _frob2(P):
    return (np.asarray(P) ** 2).sum(axis=(-2, -1))


def s_omega(P, params):
    """Matrix kernel (|P|^2 + delta^2)^((p-2)/2) P, shape (..., 2, 2).

    delta = 0 is allowed; the p < 2 singularity at P = 0 is closed with
    the exact limit value 0.
    """
    P = np.asarray(P, dtype=np.float64)
    mag2 = _frob2(P) + params.delta ** 2
    if params.delta == 0.0:
        zero = mag2 == 0.0
        safe = np.where(zero, 1.0, mag2)
        out = safe[..., None, None] ** ((params.p - 2.0) / 2.0) * P
        return np.where(zero[..., None, None], 0.0, out)
    return mag2[..., None, None] ** ((params.p - 2.0) / 2.0) * P


def s_gamma(v, params):
    """Vector kernel (|v|^2 + delta^2)^((s-2)/2) v, shape (..., 2)."""
    v = np.asarray(v, dtype=np.float64)
    mag2 = (v ** 2).sum(axis=-1) + params.delta ** 2
    if params.delta == 0.0:
        zero = mag2 == 0.0
        safe = np.where(zero, 1.0, mag2)
        out = safe[..., None] ** ((params.s - 2.0) / 2.0) * v
        return np.where(zero[..., None], 0.0, out)
    return mag2[..., None] ** ((params.s - 2.0) / 2.0) * v


def s_omega_prime_apply(P, W, params):
    """Derivative of the matrix kernel at P applied to W.

    Equals (p-2)(|P|^2 + delta^2)^((p-4)/2) (P : W) P
    + (|P|^2 + delta^2)^((p-2)/2) W.  Requires delta > 0: the kernel is
    not differentiable at the origin otherwise.
    """
    if params.delta <= 0.0:
        raise ValueError("derivative kernel needs delta > 0, got %r" % (params.delta,))
    P = np.asarray(P, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    mag2 = _frob2(P) + params.delta ** 2
    inner = (P * W).sum(axis=(-2, -1))
    return ((params.p - 2.0) * mag2 ** ((params.p - 4.0) / 2.0) * inner)[..., None, None] * P \
        + mag2[..., None, None] ** ((params.p - 2.0) / 2.0) * W


def s_gamma_prime_apply(v, w, params):
    """Derivative of the vector kernel at v applied to w; delta > 0."""
    if params.delta <= 0.0:
        raise ValueError("derivative kernel needs delta > 0, got %r" % (params.delta,))
    v = np.asarray(v, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    mag2 = (v ** 2).sum(axis=-1) + params.delta ** 2
    inner = (v * w).sum(axis=-1)
    return ((params.s - 2.0) * mag2 ** ((params.s - 4.0) / 2.0) * inner)[..., None] * v \
        + mag2[..., None] ** ((params.s - 2.0) / 2.0) * w


def monotonicity_witness(P, Q, params):
    """Monotonicity data for a pair of strain matrices.

    Returns a dict with the pairing
    ``lhs = (S(P) - S(Q)) : (P - Q)``, the reference quantity
    ``bound = (delta + |P| + |Q|)^(p-2) |P - Q|^2`` and their ratio
    (nan where the bound vanishes).  All entries broadcast.
    """
    P = np.asarray(P, dtype=np.float64)
    Q = np.asarray(Q, dtype=np.float64)
    diff = P - Q
    lhs = ((s_omega(P, params) - s_omega(Q, params)) * diff).sum(axis=(-2, -1))
    base = params.delta + np.sqrt(_frob2(P)) + np.sqrt(_frob2(Q))
    diff2 = _frob2(diff)
    with np.errstate(divide="ignore", invalid="ignore"):
        bound = base ** (params.p - 2.0) * diff2
        ratio = np.where(bound > 0.0, lhs / np.where(bound > 0.0, bound, 1.0), np.nan)
    return {"lhs": lhs, "bound": bound, "ratio": ratio}
