"""Closed-form peak metrics of the return waveform and the bias model.

Around the round-trip time the return waveform is well approximated by
a cubic in ``T = t - 2d/c``.  Two scalar metrics summarise how the
waveform deforms with incidence angle:

* ``delta_distance`` -- how far the waveform maximum moves, expressed
  as a distance (the bias an ideal peak detector would suffer);
* ``delta_shape`` -- the relative change of the curvature at the peak
  versus normal incidence (a proxy for detector-dependent error).

A sensor's range bias combines both through two fitted scale factors:
``e(d, theta) = s1 * delta_distance + s2 * delta_shape``.  The metrics
depend only on the aperture half-angle and the pulse length; emitted
power and wavelength cancel in the coefficient ratios.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .exceptions import DomainError, NoRealPeakError
from .sensors import SensorModel
from .waveform import C_LIGHT, DEFAULT_WAVELENGTH, BeamGeometry, PulseParams

#: Validity domain of the fitted bias model (meters, radians).  Depths
#: were measured up to 10 m; evaluation is permitted out to 30 m but
#: flagged as extrapolation.  The angle grid stops at 85 degrees.
DOMAIN_D_MIN = 0.5
DOMAIN_D_MAX = 30.0
DOMAIN_THETA_MAX = math.radians(85.0)

#: Relative size below which the cubic term is treated as zero and the
#: peak falls back to the quadratic-limit root (see delta_distance).
_CUBIC_DEGENERACY = 1e-18


@dataclass(frozen=True)
class TaylorIntermediates:
    """First-order expansion constants of the return-power integrand.

    ``A`` (s^-2 like, always positive) controls the Gaussian width in
    ray angle, ``K1 = cos^3(theta)`` and ``K2 = 3 cos^2(theta) sin(theta)``
    the amplitude and its skew.  ``B`` and ``C`` depend on the evaluation
    time and are absorbed into the cubic coefficients during the second
    expansion; they are carried here for documentation and inspection.
    """

    A: float
    B: float
    C: float
    K1: float
    K2: float


@dataclass(frozen=True)
class CubicCoefficients:
    """Coefficients of the local model ``RP(T) = a0 + a1 T + a2 T^2 + a3 T^3``
    with ``T = t - 2d/c``, plus the amplitude factors ``l1`` and ``l2``."""

    a0: float
    a1: float
    a2: float
    a3: float
    l1: float
    l2: float


def _check_domain(d, theta):
    d = np.asarray(d, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any(d <= 0.0):
        raise DomainError("depth must be positive")
    if np.any(theta < 0.0) or np.any(theta >= math.pi / 2.0):
        raise DomainError("incidence must be in [0, pi/2)")
    return d, theta


def taylor_intermediates(
    d: float,
    theta: float,
    pulse: PulseParams,
    beam: BeamGeometry,
    t: float | None = None,
) -> TaylorIntermediates:
    """Evaluate A, B, C, K1, K2 at depth ``d`` and incidence ``theta``.

    ``B`` and ``C`` are functions of time; they default to their values
    at the round-trip time ``t = 2d/c`` where both vanish.
    """
    d_, theta_ = _check_domain(d, theta)
    s = pulse.sigma
    tan_t = math.tan(float(theta_))
    A = 2.0 * float(d_) ** 2 * tan_t**2 / (s**2 * C_LIGHT**2) + 2.0 / beam.half_aperture**2
    if t is None:
        t = 2.0 * float(d_) / C_LIGHT
    T = t - 2.0 * float(d_) / C_LIGHT
    B = (T / s**2) * (2.0 * float(d_) * tan_t / C_LIGHT)
    Cc = -(T**2) / (2.0 * s**2)
    K1 = math.cos(float(theta_)) ** 3
    K2 = 3.0 * math.cos(float(theta_)) ** 2 * math.sin(float(theta_))
    return TaylorIntermediates(A=A, B=B, C=Cc, K1=K1, K2=K2)


def _coefficient_arrays(d, theta, pulse: PulseParams, beam: BeamGeometry):
    """Vectorised a0..a3, l1, l2 over broadcastable ``d`` and ``theta``."""
    d, theta = _check_domain(d, theta)
    s = pulse.sigma
    alpha = beam.half_aperture
    c = C_LIGHT
    cos_t = np.cos(theta)
    sin_t = np.sin(theta)
    tan_t = np.tan(theta)
    A = 2.0 * d * d * tan_t * tan_t / (s * s * c * c) + 2.0 / (alpha * alpha)
    K1 = cos_t**3
    K2 = 3.0 * cos_t * cos_t * sin_t
    amp = pulse.peak_power * (beam.waist / (alpha * d * cos_t)) ** 2
    L1 = amp * np.sqrt(np.pi) * erf(alpha * np.sqrt(A)) / (2.0 * A**1.5)
    L2 = amp * K2 / (2.0 * A)
    # exp(-A alpha^2) underflows to 0 for extreme A, which is the correct limit
    with np.errstate(under="ignore"):
        edge = np.exp(-A * alpha * alpha)
    a0 = 2.0 * A * K1 * L1
    a1 = -2.0 * d * tan_t * (-2.0 * L2 * alpha * edge + L1 * K2) / (s * s * c)
    a2 = -(
        2.0 * A * K1 * L1 * (s * s * c * c * A * cos_t * cos_t + 2.0 * d * d * cos_t * cos_t - 2.0 * d * d)
        / (2.0 * cos_t * cos_t * s**4 * c * c * A)
    )
    a3 = L1 * K2 * d * tan_t * (s * s * c * c * A - 2.0 * d * d * tan_t * tan_t) / (s**6 * c**3 * A)
    return a0, a1, a2, a3, L1, L2


def cubic_coefficients(
    d: float, theta: float, pulse: PulseParams, beam: BeamGeometry
) -> CubicCoefficients:
    """Cubic peak-model coefficients at one ``(d, theta)`` point.

    At theta=0 the odd coefficients vanish identically (``a1 = a3 = 0``)
    and the model reduces to the symmetric parabola ``a0 + a2 T^2``.
    """
    a0, a1, a2, a3, l1, l2 = _coefficient_arrays(d, theta, pulse, beam)
    return CubicCoefficients(
        a0=float(a0), a1=float(a1), a2=float(a2), a3=float(a3), l1=float(l1), l2=float(l2)
    )


def _peak_offset_arrays(a1, a2, a3, sigma):
    """Argmax T* of the cubic, vectorised, with stable branch selection.

    The critical points solve ``3 a3 T^2 + 2 a2 T + a1 = 0``.  The local
    maximum is the root where the second derivative ``6 a3 T + 2 a2`` is
    negative; of the qualifying roots the one nearest T = 0 is taken
    (the expansion is only valid near the round trip).  The paper's
    minus-branch root is exactly this maximum whenever it exists, but
    evaluating it via the textbook formula cancels catastrophically as
    a3 -> 0, so the roots are computed with the numerically stable
    quadratic form and the quadratic limit ``T* = -a1 / (2 a2)`` is used
    once ``|a3|`` drops below ``1e-18 |a2| / sigma``.
    """
    a1 = np.asarray(a1, dtype=float)
    a2 = np.asarray(a2, dtype=float)
    a3 = np.asarray(a3, dtype=float)
    disc = 4.0 * a2 * a2 - 12.0 * a1 * a3
    if np.any(disc < 0.0):
        raise NoRealPeakError(
            "negative discriminant: the cubic peak model has no real critical point"
        )
    degenerate = np.abs(a3) < _CUBIC_DEGENERACY * np.abs(a2) / sigma
    with np.errstate(divide="ignore", invalid="ignore"):
        quad_root = np.where(a2 != 0.0, -a1 / (2.0 * a2), 0.0)
        sq = np.sqrt(disc)
        b = 2.0 * a2
        q = -(b + np.where(b >= 0.0, 1.0, -1.0) * sq) / 2.0
        a3_safe = np.where(degenerate, 1.0, a3)
        q_safe = np.where(q == 0.0, 1.0, q)
        r_big = q / (3.0 * a3_safe)
        r_small = a1 / q_safe
        # keep roots at which the second derivative is negative (a maximum)
        curv_big = 6.0 * a3 * r_big + 2.0 * a2
        curv_small = 6.0 * a3 * r_small + 2.0 * a2
        big_ok = curv_big < 0.0
        small_ok = curv_small < 0.0
        pick_small = small_ok & (~big_ok | (np.abs(r_small) <= np.abs(r_big)))
        cubic_root = np.where(pick_small, r_small, r_big)
        valid = big_ok | small_ok
    if np.any(~valid & ~degenerate):
        raise NoRealPeakError("no critical point of the cubic is a local maximum")
    return np.where(degenerate, quad_root, cubic_root), disc


def delta_distance(d, theta, pulse: PulseParams, beam: BeamGeometry):
    """Peak-shift metric: the waveform-maximum offset converted to a
    one-way distance, ``T* c / 2``.

    Zero at normal incidence; negative for theta in (0, pi/2), i.e. the
    detected peak arrives early and the sensor under-ranges.
    """
    a0, a1, a2, a3, _, _ = _coefficient_arrays(d, theta, pulse, beam)
    t_star, _ = _peak_offset_arrays(a1, a2, a3, pulse.sigma)
    out = t_star * C_LIGHT / 2.0
    return out if out.ndim else float(out)


def curvature_at_peak(coeffs: CubicCoefficients):
    """Curvature magnitude of the cubic at its maximum,
    ``kappa = sqrt(4 a2^2 - 12 a1 a3)``; equals ``2 |a2|`` at theta=0."""
    disc = 4.0 * coeffs.a2**2 - 12.0 * coeffs.a1 * coeffs.a3
    if disc < 0.0:
        raise NoRealPeakError(
            "negative discriminant: the cubic peak model has no real critical point"
        )
    return math.sqrt(disc)


def _kappa_arrays(d, theta, pulse: PulseParams, beam: BeamGeometry):
    _, a1, a2, a3, _, _ = _coefficient_arrays(d, theta, pulse, beam)
    disc = 4.0 * a2 * a2 - 12.0 * a1 * a3
    if np.any(disc < 0.0):
        raise NoRealPeakError(
            "negative discriminant: the cubic peak model has no real critical point"
        )
    return np.sqrt(disc)


def delta_shape(d, theta, pulse: PulseParams, beam: BeamGeometry):
    """Shape metric: relative curvature change versus normal incidence,
    ``1 - kappa(d, 0) / kappa(d, theta)``.

    Exactly zero at theta=0.  The waveform flattens as the incidence
    grows, so kappa(d, theta) < kappa(d, 0) and the metric is negative
    at high angles.
    """
    d_arr, theta_arr = _check_domain(d, theta)
    d_b, theta_b = np.broadcast_arrays(d_arr, theta_arr)
    kappa_theta = _kappa_arrays(d_b, theta_b, pulse, beam)
    kappa_zero = _kappa_arrays(d_b, np.zeros_like(theta_b), pulse, beam)
    if np.any(kappa_theta == 0.0):
        raise NoRealPeakError(
            "kappa(d, theta) = 0: flat peak, outside the model's validity"
        )
    out = 1.0 - kappa_zero / kappa_theta
    return out if out.ndim else float(out)


def domain_clamp(d, theta):
    """Clamp ``(d, theta)`` to the model validity domain.

    Returns ``(d_clamped, theta_clamped, clamped_mask)``.  Angles above
    85 degrees evaluate at 85 degrees; depths clamp to [0.5, 30] m.
    """
    d = np.asarray(d, dtype=float)
    theta = np.asarray(theta, dtype=float)
    d_c = np.clip(d, DOMAIN_D_MIN, DOMAIN_D_MAX)
    theta_c = np.minimum(theta, DOMAIN_THETA_MAX)
    mask = (d_c != d) | (theta_c != theta)
    return d_c, theta_c, mask


def bias_error(d, theta, model: SensorModel, pulse: PulseParams, policy: str = "clamp"):
    """Range bias ``e(d, theta) = s1 * delta_distance + s2 * delta_shape``
    for one sensor, in meters (negative: the sensor under-ranges).

    ``policy`` controls out-of-domain handling: ``"clamp"`` evaluates at
    the clamped point and emits a warning, ``"strict"`` raises
    :class:`DomainError`.  Accepts scalars or arrays.
    """
    d = np.asarray(d, dtype=float)
    theta = np.asarray(theta, dtype=float)
    d_c, theta_c, clamped = domain_clamp(d, theta)
    if np.any(clamped):
        if policy == "strict":
            raise DomainError(
                "evaluation outside the validity domain "
                f"(d in [{DOMAIN_D_MIN}, {DOMAIN_D_MAX}] m, theta <= 85 deg)"
            )
        if policy == "clamp":
            warnings.warn(
                f"{int(np.count_nonzero(clamped))} point(s) outside the validity domain "
                "were clamped",
                stacklevel=2,
            )
        else:
            raise ValueError(f"unknown policy {policy!r}")
    beam = BeamGeometry(wavelength=DEFAULT_WAVELENGTH, half_aperture=model.half_aperture)
    d_b, theta_b = np.broadcast_arrays(d_c, theta_c)
    out = np.zeros(d_b.shape, dtype=float)
    nonzero = theta_b > 0.0
    if np.any(nonzero):
        dd = delta_distance(d_b[nonzero], theta_b[nonzero], pulse, beam)
        ds = delta_shape(d_b[nonzero], theta_b[nonzero], pulse, beam)
        out[nonzero] = model.s1 * dd + model.s2 * ds
    return out if out.ndim else float(out)
