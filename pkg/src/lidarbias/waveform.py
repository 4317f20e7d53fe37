"""Time-of-flight return-waveform simulator.

A pulsed rangefinder emits a Gaussian light pulse through a diverging
beam, the beam illuminates a tilted plane, and the reflected light
arrives back at the detector spread out in time because every point of
the illuminated footprint sits at a different distance.  This module
integrates that process directly (no small-angle expansion), which makes
it the ground-truth reference that the closed-form peak metrics are
validated against.

Geometry convention: the sensor is at the origin looking along +z, the
plane is parallel to the y axis at axial depth ``d``, and its normal is
tilted by the incidence angle ``theta`` in the x-z plane.  A ray inside
the beam cone is parameterised by the angles ``a`` (x-z plane) and ``b``
(y-z plane) that it makes with the beam centre.

All quantities are strict SI: meters, seconds, radians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DomainError, GrazingGeometryError, PeakWindowError, QuadratureError

#: Speed of light in vacuum (m/s, exact).
C_LIGHT = 299_792_458.0

#: Default emitted peak intensity (W/m^2).
DEFAULT_PEAK_POWER = 0.39
#: Default pulse length tau (s).
DEFAULT_PULSE_LENGTH = 50e-9
#: Default laser wavelength (m).
DEFAULT_WAVELENGTH = 905e-9


@dataclass(frozen=True)
class PulseParams:
    """Emitted pulse: a Gaussian of length ``pulse_length`` (tau) and
    peak intensity ``peak_power`` (I0).

    The Gaussian shape parameter is ``sigma = tau / sqrt(2*pi)``.
    """

    peak_power: float = DEFAULT_PEAK_POWER
    pulse_length: float = DEFAULT_PULSE_LENGTH

    def __post_init__(self):
        if not (self.peak_power > 0.0 and math.isfinite(self.peak_power)):
            raise DomainError(f"peak_power must be positive, got {self.peak_power}")
        if not (self.pulse_length > 0.0 and math.isfinite(self.pulse_length)):
            raise DomainError(f"pulse_length must be positive, got {self.pulse_length}")

    @property
    def sigma(self) -> float:
        """Gaussian width sigma = pulse_length / sqrt(2*pi), seconds."""
        return self.pulse_length / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class BeamGeometry:
    """Diverging Gaussian beam of wavelength ``wavelength`` (lambda) and
    aperture half-angle ``half_aperture`` (alpha).

    At distances well past the waist the beam radius grows linearly as
    ``alpha * z`` and the waist radius is ``w0 = lambda / (pi * alpha)``.
    """

    wavelength: float = DEFAULT_WAVELENGTH
    half_aperture: float = math.radians(0.43)

    def __post_init__(self):
        if not (self.wavelength > 0.0 and math.isfinite(self.wavelength)):
            raise DomainError(f"wavelength must be positive, got {self.wavelength}")
        if not 0.0 < self.half_aperture < math.pi / 2.0:
            raise DomainError(
                f"half_aperture must be in (0, pi/2), got {self.half_aperture}"
            )

    @property
    def waist(self) -> float:
        """Beam waist radius w0 = wavelength / (pi * half_aperture), meters."""
        return self.wavelength / (math.pi * self.half_aperture)


@dataclass(frozen=True)
class SurfaceTarget:
    """Planar target at axial depth ``depth`` whose normal makes the
    angle ``incidence`` with the beam axis."""

    depth: float
    incidence: float

    def __post_init__(self):
        if not (self.depth > 0.0 and math.isfinite(self.depth)):
            raise DomainError(f"depth must be positive, got {self.depth}")
        if not 0.0 <= self.incidence < math.pi / 2.0:
            raise DomainError(
                f"incidence must be in [0, pi/2), got {self.incidence}"
            )


@dataclass
class SampledWaveform:
    """Return intensity sampled on a uniform time grid.

    ``samples[i]`` is the intensity at time ``t0 + i * dt``.
    """

    t0: float
    dt: float
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if not self.dt > 0.0:
            raise DomainError(f"dt must be positive, got {self.dt}")
        if self.samples.size == 0:
            raise DomainError("samples must be non-empty")
        if not np.all(np.isfinite(self.samples)):
            raise DomainError("samples must be finite")
        if np.any(self.samples < 0.0):
            raise DomainError("samples must be non-negative")

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.samples.size)


def emitted_pulse(t, pulse: PulseParams):
    """Emitted pulse intensity ``I0 * exp(-t^2 / (2 sigma^2))``.

    ``t`` may be a scalar or an array; the peak value I0 occurs at t=0.
    """
    t = np.asarray(t, dtype=float)
    s = pulse.sigma
    out = pulse.peak_power * np.exp(-(t * t) / (2.0 * s * s))
    return out if out.ndim else float(out)


def beam_intensity(r, z, beam: BeamGeometry):
    """Far-field Gaussian beam intensity factor at radius ``r`` from the
    beam axis and axial distance ``z``:

        (w0 / (alpha z))^2 * exp(-2 r^2 / (alpha^2 z^2))

    The on-axis value falls off as 1/z^2 and the radial profile is a
    Gaussian whose 1/e^2 radius equals the beam radius ``alpha * z``.
    """
    r = np.asarray(r, dtype=float)
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0.0):
        raise DomainError("beam_intensity requires z > 0")
    az = beam.half_aperture * z
    out = (beam.waist / az) ** 2 * np.exp(-2.0 * (r * r) / (az * az))
    return out if out.ndim else float(out)


def point_geometry(a, b, target: SurfaceTarget):
    """Geometry of the footprint point reached at ray angles ``(a, b)``.

    Returns ``(rho, r, z)`` where ``z`` is the axial distance of the hit
    point, ``r`` its distance from the beam axis, and ``rho`` its
    straight-line distance from the emitter:

        z   = d cos(a) cos(theta) / cos(a + theta)
        r^2 = z^2 (tan^2 a + tan^2 b)
        rho = sqrt(r^2 + z^2)

    Raises :class:`GrazingGeometryError` when ``a + theta >= pi/2`` (the
    ray runs parallel to the plane or away from it).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(np.abs(a) >= math.pi / 2.0) or np.any(np.abs(b) >= math.pi / 2.0):
        raise DomainError("ray angles must satisfy |a|, |b| < pi/2")
    if np.any(np.abs(a + target.incidence) >= math.pi / 2.0):
        raise GrazingGeometryError(
            "ray does not intersect the plane: |a + incidence| >= pi/2"
        )
    z = target.depth * np.cos(a) * np.cos(target.incidence) / np.cos(a + target.incidence)
    r2 = z * z * (np.tan(a) ** 2 + np.tan(b) ** 2)
    r = np.sqrt(r2)
    rho = np.sqrt(r2 + z * z)
    if rho.ndim:
        return rho, r, z
    return float(rho), float(r), float(z)


def projected_energy(t, a, b, target: SurfaceTarget, pulse: PulseParams, beam: BeamGeometry):
    """Instantaneous intensity projected onto the plane at ray ``(a, b)``:

        L(gamma) * emitted_pulse(t - rho/c) * beam_intensity(r, z)

    with the Lambertian reflectance ``L(gamma) = cos(gamma)`` and local
    incidence ``gamma = arccos(cos(a + theta) cos b)``.  The single
    ``rho/c`` delay here is the outbound propagation; the return-path
    delay is applied by the waveform integral.
    """
    rho, r, z = point_geometry(a, b, target)
    t = np.asarray(t, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    cos_gamma = np.cos(a + target.incidence) * np.cos(b)
    out = cos_gamma * emitted_pulse(t - rho / C_LIGHT, pulse) * beam_intensity(r, z, beam)
    return out if np.ndim(out) else float(out)


def default_time_window(target: SurfaceTarget, pulse: PulseParams) -> tuple[float, float]:
    """Window [2d/c - 4 sigma, 2d/c + 4 sigma] centred on the round trip.

    A Gaussian pulse carries more than 99.99% of its energy within
    +/- 4 sigma, so the window contains the whole usable return.
    """
    t_round = 2.0 * target.depth / C_LIGHT
    half = 4.0 * pulse.sigma
    return (t_round - half, t_round + half)


def _simpson_weights(n: int) -> np.ndarray:
    # n intervals (even), n+1 nodes
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w


def _integrate_doubling(evaluate, n0: int, n_max: int, tol_rel: float):
    """Composite Simpson with interval doubling until the largest sample
    changes by less than ``tol_rel`` of the running peak value."""
    n = n0
    prev = None
    last_err = float("nan")
    while n <= n_max:
        cur = evaluate(n)
        if prev is not None:
            scale = float(cur.max())
            last_err = float(np.max(np.abs(cur - prev)))
            if scale > 0.0 and last_err < tol_rel * scale:
                return cur
        prev = cur
        n *= 2
    raise QuadratureError(
        f"quadrature did not converge below {tol_rel} of the peak at n={n_max} intervals "
        f"(last change {last_err:.3e})",
        estimate=prev,
        error_bound=last_err,
    )


def return_waveform_2d(
    target: SurfaceTarget,
    pulse: PulseParams,
    beam: BeamGeometry,
    time_window: tuple[float, float] | None = None,
    n_samples: int = 512,
    tol: float = 1e-12,
    n_quad_start: int = 64,
    n_quad_max: int = 1 << 16,
) -> SampledWaveform:
    """Return waveform restricted to the skewed direction (b = 0):

        RP(t) ~ integral over a in [-alpha, +alpha] of PP(t - rho/c, a, 0)

    The projected energy already carries one outbound ``rho/c`` delay, so
    the composed integrand is delayed by the full round trip ``2 rho/c``.
    The integral is evaluated by adaptive composite Simpson, doubling the
    node count until every sample is stable to ``tol`` of the peak value.
    """
    if n_samples < 64:
        raise DomainError("n_samples must be at least 64")
    if target.incidence + beam.half_aperture >= math.pi / 2.0:
        raise GrazingGeometryError(
            "beam cone does not fully intersect the plane: incidence + half_aperture >= pi/2"
        )
    if time_window is None:
        time_window = default_time_window(target, pulse)
    t = np.linspace(time_window[0], time_window[1], n_samples)
    alpha = beam.half_aperture

    def evaluate(n):
        a = np.linspace(-alpha, alpha, n + 1)
        rho, _, _ = point_geometry(a, 0.0, target)
        f = projected_energy(t[:, None] - rho[None, :] / C_LIGHT, a[None, :], 0.0, target, pulse, beam)
        h = 2.0 * alpha / n
        return (h / 3.0) * f @ _simpson_weights(n)

    samples = _integrate_doubling(evaluate, n_quad_start, n_quad_max, tol)
    return SampledWaveform(t0=float(t[0]), dt=float(t[1] - t[0]), samples=samples)


def return_waveform_full(
    target: SurfaceTarget,
    pulse: PulseParams,
    beam: BeamGeometry,
    time_window: tuple[float, float] | None = None,
    n_samples: int = 512,
    tol: float = 1e-10,
    n_quad_start: int = 128,
    n_quad_max: int = 1 << 12,
) -> SampledWaveform:
    """Return waveform integrated over both footprint directions,
    a, b in [-alpha, +alpha]^2.

    This is only needed to confirm that dropping the unskewed b
    direction does not move the peak; it costs O(n^2) integrand
    evaluations per time sample.
    """
    if n_samples < 64:
        raise DomainError("n_samples must be at least 64")
    if target.incidence + beam.half_aperture >= math.pi / 2.0:
        raise GrazingGeometryError(
            "beam cone does not fully intersect the plane: incidence + half_aperture >= pi/2"
        )
    if time_window is None:
        time_window = default_time_window(target, pulse)
    t = np.linspace(time_window[0], time_window[1], n_samples)
    alpha = beam.half_aperture

    def evaluate(n):
        a = np.linspace(-alpha, alpha, n + 1)
        b = np.linspace(-alpha, alpha, n + 1)
        h = 2.0 * alpha / n
        w = _simpson_weights(n)
        acc = np.zeros((t.size, n + 1))
        # accumulate the Simpson sum over b one slice at a time to keep
        # the working set at O(n_samples * n)
        for wj, bj in zip(w, b):
            rho, _, _ = point_geometry(a, bj, target)
            f = projected_energy(
                t[:, None] - rho[None, :] / C_LIGHT, a[None, :], bj, target, pulse, beam
            )
            acc += (wj * h / 3.0) * f
        return (h / 3.0) * acc @ w

    samples = _integrate_doubling(evaluate, n_quad_start, n_quad_max, tol)
    return SampledWaveform(t0=float(t[0]), dt=float(t[1] - t[0]), samples=samples)


def peak_time(waveform: SampledWaveform) -> float:
    """Sub-sample peak location: the vertex of the parabola through the
    three samples around the maximum.

    Raises :class:`PeakWindowError` when the maximum sits on a window
    boundary, since the true peak then lies outside the sampled range.
    """
    y = waveform.samples
    i = int(np.argmax(y))
    if i == 0 or i == y.size - 1:
        raise PeakWindowError(
            "waveform maximum lies on the window boundary; widen the time window"
        )
    ym, y0, yp = y[i - 1], y[i], y[i + 1]
    denom = ym - 2.0 * y0 + yp
    if denom == 0.0:
        offset = 0.0
    else:
        offset = 0.5 * (ym - yp) / denom
    return waveform.t0 + waveform.dt * (i + offset)
