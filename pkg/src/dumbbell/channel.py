"""Mode algebra in the tube: section masses, two-exponential fits, and the
spherical representation on the left side.

The ground-mode coefficient of a solution along the tube is an exact linear
combination A e^(k(t-1)) + B e^(-k(t-1)) with k = sqrt(lambda1)/eps, because
the weight vanishes on the whole tube.  Fits are solved in shifted
coordinates (both basis columns <= 1 on the window) so the normal equations
stay conditioned even when k*width is large, and coefficients are carried as
ScaledAmplitudes so the e^(+-k) factors never overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import cross_section as cs
from .scaled import ScaledAmplitude

__all__ = [
    "ModeFit",
    "SphericalFit",
    "htilde",
    "hminus",
    "fit_channel_mode",
    "spherical_fit",
    "propagate",
]


# ----------------------------------------------------------------------------
# Section and half-sphere masses
# ----------------------------------------------------------------------------

def htilde(field, r: float, eps: float, dimension: int = 3,
           order: int = cs.DEFAULT_QUAD_ORDER):
    """Scaled-section mass Htilde(r) = int_Sigma field(r, eps x')^2 dx' and
    the channel mass Hc(r) = eps^(N-1) Htilde(r).

    `r` is the x1-coordinate of the section, which must lie in the tube
    [0, 1]."""
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"section x1 = {r} outside the tube [0, 1]")
    if eps <= 0:
        raise ValueError("eps must be positive")
    ht = cs.section_mass(field, r, eps, dimension, order)
    return ht, eps ** (dimension - 1) * ht


def hminus(field, t: float, dimension: int = 3,
           order: int = cs.DEFAULT_QUAD_ORDER) -> float:
    """H^-(t) = t^(1-N) int over the left half-sphere of radius t of
    field^2 dsigma."""
    if t <= 0:
        raise ValueError("half-sphere radius must be positive")
    return t ** (1 - dimension) * cs.half_sphere_mass(
        field, 0.0, t, -1, dimension, order)


# ----------------------------------------------------------------------------
# Two-exponential tube fit
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class ModeFit:
    """Coefficients of field ~ A e^(k(t-1)) + B e^(-k(t-1)), k = sqrt_l1/eps.

    C = -2 sqrt_l1 B / eps is stored as constructed from B, never refitted.
    `b_resolved` is False when the window cannot distinguish B from the
    least-squares noise floor; B is then an exact zero, not a noise value.
    """

    eps: float
    sqrt_lambda1: float
    A: ScaledAmplitude
    B: ScaledAmplitude
    C: ScaledAmplitude
    window: tuple
    residual: float
    b_resolved: bool = True

    @classmethod
    def from_coefficients(cls, eps: float, sqrt_lambda1: float,
                          A: ScaledAmplitude, B: ScaledAmplitude,
                          window=(0.0, 1.0), residual: float = 0.0,
                          b_resolved: bool = True) -> "ModeFit":
        C = B * ScaledAmplitude.from_float(-2.0 * sqrt_lambda1 / eps) \
            if not B.is_zero() else ScaledAmplitude.zero()
        return cls(eps, sqrt_lambda1, A, B, C, tuple(window), residual,
                   b_resolved)


def fit_channel_mode(samples, eps: float, sqrt_lambda1: float,
                     resolve_factor: float = 30.0) -> ModeFit:
    """Least squares of (t, value) samples against the two tube
    exponentials.

    The basis is shifted per column, e^(k(t - t_hi)) and e^(-k(t - t_lo)),
    so both columns live in (0, 1]; the unshifted coefficients are then
    recovered exactly in the exponent via scaled arithmetic.
    """
    pts = sorted((float(t), float(v)) for t, v in samples)
    if len(pts) < 4:
        raise ValueError("need at least 4 samples for a two-mode fit")
    ts = np.array([t for t, _ in pts])
    ys = np.array([v for _, v in pts])
    t_lo, t_hi = ts[0], ts[-1]
    if t_hi - t_lo < 0.2 - 1e-12:
        raise ValueError(f"fit window [{t_lo}, {t_hi}] narrower than 0.2")
    k = sqrt_lambda1 / eps

    yscale = np.max(np.abs(ys))
    if yscale == 0.0:
        raise ValueError("all samples vanish; nothing to fit")
    M = np.stack([np.exp(k * (ts - t_hi)), np.exp(-k * (ts - t_lo))], axis=1)
    yn = ys / yscale
    coef, _, _, _ = np.linalg.lstsq(M, yn, rcond=None)
    # one refinement pass with the residual taken in extended precision:
    # the dominated coefficient sits ~5 decades below the signal here and
    # plain double lstsq loses its last digits
    Ml = M.astype(np.longdouble)
    for _ in range(2):
        r = np.asarray(yn.astype(np.longdouble) - Ml @ coef, dtype=float)
        delta, _, _, _ = np.linalg.lstsq(M, r, rcond=None)
        coef = coef + delta
    misfit = M @ coef - yn
    resid_abs = float(np.linalg.norm(misfit) / math.sqrt(len(ts)))
    residual = float(np.linalg.norm(misfit) / np.linalg.norm(ys / yscale))

    a_sh, b_sh = float(coef[0]) * yscale, float(coef[1]) * yscale
    noise_floor = resolve_factor * (resid_abs + 1e-15) * yscale
    b_resolved = abs(b_sh) > noise_floor

    A = ScaledAmplitude.from_float(a_sh).scale_exp(k * (1.0 - t_hi)) \
        if a_sh != 0.0 else ScaledAmplitude.zero()
    if b_resolved:
        B = ScaledAmplitude.from_float(b_sh).scale_exp(k * (t_lo - 1.0))
    else:
        B = ScaledAmplitude.zero()
    return ModeFit.from_coefficients(eps, sqrt_lambda1, A, B,
                                     window=(t_lo, t_hi), residual=residual,
                                     b_resolved=b_resolved)


def propagate(fit: ModeFit, t: float) -> ScaledAmplitude:
    """Evaluate the two-exponential model at t in scaled arithmetic."""
    k = fit.sqrt_lambda1 / fit.eps
    out = ScaledAmplitude.zero()
    if not fit.A.is_zero():
        out = out + fit.A.scale_exp(k * (t - 1.0))
    if not fit.B.is_zero():
        out = out + fit.B.scale_exp(-k * (t - 1.0))
    return out


# ----------------------------------------------------------------------------
# Spherical representation on the left side
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class SphericalFit:
    """Coefficients of v(r) = alpha r + beta r^(1-N); d = -N beta exactly."""

    eps: float
    dimension: int
    alpha: float
    beta: float
    d: float
    radii: tuple
    residual: float


def spherical_fit(samples, n: int = 3, eps: float = 0.0) -> SphericalFit:
    pts = sorted((float(r), float(v)) for r, v in samples)
    if len(pts) < 2:
        raise ValueError("need at least 2 radii")
    rs = np.array([r for r, _ in pts])
    vs = np.array([v for _, v in pts])
    if np.any(rs <= 0):
        raise ValueError("radii must be positive")
    M = np.stack([rs, rs ** (1 - n)], axis=1)
    coef, _, _, _ = np.linalg.lstsq(M, vs, rcond=None)
    misfit = M @ coef - vs
    residual = float(np.linalg.norm(misfit) / max(np.linalg.norm(vs), 1e-300))
    alpha, beta = float(coef[0]), float(coef[1])
    return SphericalFit(eps, n, alpha, beta, -n * beta, tuple(rs), residual)
