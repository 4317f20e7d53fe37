import math

import numpy as np
import pytest

from lidarbias import (
    C_LIGHT,
    BeamGeometry,
    PulseParams,
    SampledWaveform,
    SurfaceTarget,
    beam_intensity,
    emitted_pulse,
    peak_time,
    point_geometry,
    projected_energy,
    return_waveform_2d,
    return_waveform_full,
)
from lidarbias.exceptions import (
    DomainError,
    GrazingGeometryError,
    PeakWindowError,
    QuadratureError,
)
from lidarbias.waveform import default_time_window


def narrow_window(d, pulse, half_sigmas=1.0):
    t0 = 2.0 * d / C_LIGHT
    half = half_sigmas * pulse.sigma
    return (t0 - half, t0 + half)


# ---------------------------------------------------------------------------
# types
# ---------------------------------------------------------------------------

def test_pulse_sigma_derivation(pulse):
    assert pulse.sigma == 50e-9 / math.sqrt(2.0 * math.pi)


def test_beam_waist_derivation(lms151_beam):
    assert lms151_beam.waist == 905e-9 / (math.pi * lms151_beam.half_aperture)


@pytest.mark.parametrize(
    "kwargs",
    [dict(peak_power=0.0), dict(peak_power=-1.0), dict(pulse_length=0.0)],
)
def test_pulse_validation(kwargs):
    with pytest.raises(DomainError):
        PulseParams(**kwargs)


def test_target_validation():
    with pytest.raises(DomainError):
        SurfaceTarget(depth=-1.0, incidence=0.0)
    with pytest.raises(DomainError):
        SurfaceTarget(depth=1.0, incidence=math.pi / 2.0)


def test_sampled_waveform_validation():
    with pytest.raises(DomainError):
        SampledWaveform(t0=0.0, dt=0.0, samples=np.ones(4))
    with pytest.raises(DomainError):
        SampledWaveform(t0=0.0, dt=1.0, samples=np.array([1.0, -0.1]))
    with pytest.raises(DomainError):
        SampledWaveform(t0=0.0, dt=1.0, samples=np.array([]))


# ---------------------------------------------------------------------------
# emitted_pulse
# ---------------------------------------------------------------------------

def test_emitted_pulse_peak(pulse):
    assert emitted_pulse(0.0, pulse) == 0.39


def test_emitted_pulse_one_sigma(pulse):
    assert emitted_pulse(pulse.sigma, pulse) == pytest.approx(
        0.39 * math.exp(-0.5), rel=1e-15
    )


def test_emitted_pulse_tail(pulse):
    assert emitted_pulse(10.0 * pulse.sigma, pulse) < 1e-20 * 0.39


# ---------------------------------------------------------------------------
# beam_intensity
# ---------------------------------------------------------------------------

def test_beam_on_axis(lms151_beam):
    z = 7.0
    expected = (lms151_beam.waist / (lms151_beam.half_aperture * z)) ** 2
    assert beam_intensity(0.0, z, lms151_beam) == pytest.approx(expected, rel=1e-15)


def test_beam_radius_point(lms151_beam):
    z = 3.0
    r = lms151_beam.half_aperture * z
    on_axis = beam_intensity(0.0, z, lms151_beam)
    assert beam_intensity(r, z, lms151_beam) == pytest.approx(
        on_axis * math.exp(-2.0), rel=1e-14
    )


def test_beam_inverse_square(lms151_beam):
    assert beam_intensity(0.0, 2.0, lms151_beam) == pytest.approx(
        beam_intensity(0.0, 1.0, lms151_beam) / 4.0, rel=1e-14
    )


def test_beam_decreasing_in_radius(lms151_beam):
    z = 5.0
    r = np.linspace(0.0, 0.1, 50)
    vals = beam_intensity(r, z, lms151_beam)
    assert np.all(np.diff(vals) < 0.0)


def test_beam_rejects_nonpositive_z(lms151_beam):
    with pytest.raises(DomainError):
        beam_intensity(0.0, 0.0, lms151_beam)
    with pytest.raises(DomainError):
        beam_intensity(0.0, -1.0, lms151_beam)


# ---------------------------------------------------------------------------
# point_geometry
# ---------------------------------------------------------------------------

def test_point_geometry_beam_center():
    target = SurfaceTarget(depth=4.2, incidence=math.radians(30.0))
    rho, r, z = point_geometry(0.0, 0.0, target)
    assert rho == pytest.approx(4.2, rel=1e-15)
    assert r == 0.0
    assert z == pytest.approx(4.2, rel=1e-15)


def test_point_geometry_right_triangle():
    b0 = 0.01
    target = SurfaceTarget(depth=3.0, incidence=0.0)
    rho, r, z = point_geometry(0.0, b0, target)
    assert z == pytest.approx(3.0, rel=1e-12)
    assert r == pytest.approx(3.0 * math.tan(b0), rel=1e-12)
    assert rho == pytest.approx(3.0 / math.cos(b0), rel=1e-12)


def test_point_geometry_golden():
    # frozen from a 50-digit evaluation of the three formulas
    target = SurfaceTarget(depth=5.0, incidence=math.radians(80.0))
    rho, r, z = point_geometry(0.005, 0.0, target)
    assert z == pytest.approx(5.1459210587389193, rel=1e-14)
    assert r == pytest.approx(0.025729819709216199, rel=1e-14)
    assert rho == pytest.approx(5.1459853834222021, rel=1e-14)


def test_point_geometry_grazing_error():
    target = SurfaceTarget(depth=5.0, incidence=math.radians(85.0))
    with pytest.raises(GrazingGeometryError):
        point_geometry(math.radians(6.0), 0.0, target)


# ---------------------------------------------------------------------------
# projected_energy
# ---------------------------------------------------------------------------

def test_projected_energy_center_peak(pulse, lms151_beam):
    d = 6.0
    target = SurfaceTarget(depth=d, incidence=0.0)
    value = projected_energy(d / C_LIGHT, 0.0, 0.0, target, pulse, lms151_beam)
    expected = 0.39 * (lms151_beam.waist / (lms151_beam.half_aperture * d)) ** 2
    assert value == pytest.approx(expected, rel=1e-14)


def test_projected_energy_vanishes_at_grazing(pulse):
    # wide beam so the beam factor stays representable out at the grazing
    # ray; the pulse is held at its peak, isolating the Lambertian factor
    beam = BeamGeometry(wavelength=905e-9, half_aperture=math.radians(30.0))
    d = 5.0
    target = SurfaceTarget(depth=d, incidence=math.radians(50.0))
    values = []
    for eps in (1e-1, 1e-2, 1e-3, 1e-4):
        a = math.pi / 2.0 - target.incidence - eps
        rho, _, _ = point_geometry(a, 0.0, target)
        values.append(
            projected_energy(rho / C_LIGHT, a, 0.0, target, pulse, beam)
        )
    assert all(x > y for x, y in zip(values, values[1:]))
    assert values[-1] < 1e-3 * values[0]


def test_projected_energy_golden(pulse, lms151_beam):
    # mid-beam sample at theta=60: frozen from a 50-digit composition of
    # the audited sub-operations (single outbound delay)
    target = SurfaceTarget(depth=5.0, incidence=math.radians(60.0))
    a = lms151_beam.half_aperture / 2.0
    t = 2.0 * 5.0 / C_LIGHT
    value = projected_energy(t, a, 0.0, target, pulse, lms151_beam)
    assert value == pytest.approx(8.5947891918896430e-8, rel=1e-13)


# ---------------------------------------------------------------------------
# return_waveform_2d
# ---------------------------------------------------------------------------

def test_waveform_peak_at_round_trip_normal_incidence(pulse, lms151_beam):
    d = 5.0
    target = SurfaceTarget(depth=d, incidence=0.0)
    wave = return_waveform_2d(target, pulse, lms151_beam)
    assert abs(peak_time(wave) - 2.0 * d / C_LIGHT) <= wave.dt


def test_waveform_peak_advances_at_high_incidence(pulse, lms151_beam):
    d = 5.0
    tw = narrow_window(d, pulse)
    ref = return_waveform_2d(SurfaceTarget(d, 0.0), pulse, lms151_beam, time_window=tw)
    skewed = return_waveform_2d(
        SurfaceTarget(d, math.radians(80.0)), pulse, lms151_beam, time_window=tw
    )
    assert peak_time(skewed) < peak_time(ref)
    assert peak_time(skewed) < 2.0 * d / C_LIGHT


def test_waveform_energy_drops_off_normal(pulse, lms151_beam):
    d = 5.0
    wave0 = return_waveform_2d(SurfaceTarget(d, 0.0), pulse, lms151_beam)
    wave80 = return_waveform_2d(
        SurfaceTarget(d, math.radians(80.0)), pulse, lms151_beam
    )
    energy0 = np.trapezoid(wave0.samples, dx=wave0.dt)
    energy80 = np.trapezoid(wave80.samples, dx=wave80.dt)
    assert energy80 < energy0


def test_waveform_monotone_advance(pulse, lms151_beam):
    d = 3.0
    tw = narrow_window(d, pulse)
    peaks = []
    for theta_deg in (0.0, 20.0, 40.0, 60.0, 80.0):
        wave = return_waveform_2d(
            SurfaceTarget(d, math.radians(theta_deg)), pulse, lms151_beam, time_window=tw
        )
        peaks.append(peak_time(wave))
    assert all(b <= a for a, b in zip(peaks, peaks[1:]))


def test_waveform_non_negative_on_grid(pulse, lms151_beam):
    for d in (0.5, 5.0, 30.0):
        for theta_deg in (0.0, 45.0, 85.0):
            wave = return_waveform_2d(
                SurfaceTarget(d, math.radians(theta_deg)), pulse, lms151_beam,
                n_samples=128,
            )
            assert np.all(wave.samples >= 0.0)


def test_waveform_quadrature_halved_step(pulse, lms151_beam):
    # halving the quadrature step moves no sample by more than 1e-6 of the peak
    target = SurfaceTarget(5.0, math.radians(60.0))
    coarse = return_waveform_2d(
        target, pulse, lms151_beam, n_samples=128, tol=np.inf, n_quad_start=256,
        n_quad_max=512,
    )
    fine = return_waveform_2d(
        target, pulse, lms151_beam, n_samples=128, tol=np.inf, n_quad_start=512,
        n_quad_max=1024,
    )
    change = np.max(np.abs(coarse.samples - fine.samples))
    assert change < 1e-6 * fine.samples.max()


def test_waveform_rejects_tiny_sample_count(pulse, lms151_beam):
    with pytest.raises(DomainError):
        return_waveform_2d(SurfaceTarget(5.0, 0.0), pulse, lms151_beam, n_samples=32)


def test_waveform_quadrature_error_carries_estimate(pulse, lms151_beam):
    with pytest.raises(QuadratureError) as excinfo:
        return_waveform_2d(
            SurfaceTarget(5.0, math.radians(60.0)), pulse, lms151_beam,
            n_samples=64, tol=1e-30, n_quad_start=64, n_quad_max=128,
        )
    assert excinfo.value.estimate is not None
    assert excinfo.value.error_bound > 0.0


def test_waveform_grazing_cone(pulse, lms151_beam):
    target = SurfaceTarget(5.0, math.radians(89.9))
    with pytest.raises(GrazingGeometryError):
        return_waveform_2d(target, pulse, lms151_beam)


# ---------------------------------------------------------------------------
# return_waveform_full
# ---------------------------------------------------------------------------

def test_full_waveform_peak_at_round_trip(pulse, lms151_beam):
    d = 5.0
    target = SurfaceTarget(depth=d, incidence=0.0)
    wave = return_waveform_full(target, pulse, lms151_beam, n_samples=128)
    assert abs(peak_time(wave) - 2.0 * d / C_LIGHT) <= wave.dt


def test_full_waveform_non_negative(pulse, lms151_beam):
    wave = return_waveform_full(
        SurfaceTarget(5.0, math.radians(60.0)), pulse, lms151_beam, n_samples=128
    )
    assert np.all(wave.samples >= 0.0)


def test_full_vs_2d_peak_agreement(pulse, lms151_beam):
    # the b direction adds a symmetric defocus delay bounded by
    # d tan^2(alpha) / 2 in range units, but no skew: peak times agree
    # within that bound plus numeric slack
    d = 5.0
    theta = math.radians(70.0)
    tw = narrow_window(d, pulse)
    wave_2d = return_waveform_2d(
        SurfaceTarget(d, theta), pulse, lms151_beam, time_window=tw
    )
    wave_full = return_waveform_full(
        SurfaceTarget(d, theta), pulse, lms151_beam, time_window=tw, n_samples=256
    )
    bound_m = d * math.tan(lms151_beam.half_aperture) ** 2 / 2.0 + 1e-6
    diff_m = abs(peak_time(wave_full) - peak_time(wave_2d)) * C_LIGHT / 2.0
    assert diff_m <= bound_m


# ---------------------------------------------------------------------------
# peak_time
# ---------------------------------------------------------------------------

def test_peak_time_symmetric_samples():
    wave = SampledWaveform(t0=0.0, dt=1.0, samples=np.array([1.0, 3.0, 1.0]))
    assert peak_time(wave) == pytest.approx(1.0, abs=1e-15)


def test_peak_time_asymmetric_samples():
    # parabola through (0,1), (1,3), (2,2): vertex at 1 + 1/6
    wave = SampledWaveform(t0=0.0, dt=1.0, samples=np.array([1.0, 3.0, 2.0]))
    assert peak_time(wave) == pytest.approx(1.0 + 1.0 / 6.0, rel=1e-15)


def test_peak_time_boundary_error():
    wave = SampledWaveform(t0=0.0, dt=1.0, samples=np.array([3.0, 2.0, 1.0]))
    with pytest.raises(PeakWindowError):
        peak_time(wave)


def test_peak_time_oracle_resolution(pulse, lms151_beam):
    d = 2.0
    target = SurfaceTarget(depth=d, incidence=0.0)
    wave = return_waveform_2d(target, pulse, lms151_beam)
    assert abs(peak_time(wave) - 2.0 * d / C_LIGHT) < wave.dt / 10.0


def test_default_time_window_covers_round_trip(pulse):
    target = SurfaceTarget(depth=7.0, incidence=0.0)
    lo, hi = default_time_window(target, pulse)
    t_rt = 2.0 * 7.0 / C_LIGHT
    assert lo < t_rt < hi
    assert hi - lo == pytest.approx(8.0 * pulse.sigma)
