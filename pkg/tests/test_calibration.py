import math

import numpy as np
import pytest

from lidarbias import (
    FitResult,
    MeasurementRecord,
    PulseParams,
    SensorModel,
    SetupGeometry,
    bias_error,
    corrected_distance,
    fit_pfister,
    fit_scale_factors,
    isocurve_grid,
    measurement_error,
    symmetric_average,
)
from lidarbias.calibration import (
    GRID_ANGLES_DEG,
    GRID_DEPTHS,
    estimate_delta_z,
    read_measurement_csv,
    reference_grid,
    synthesize_records,
    tuples_to_fit_data,
    write_isocurve_csv,
    write_measurement_csv,
)
from lidarbias.exceptions import DegenerateFitError, DomainError


# ---------------------------------------------------------------------------
# bench geometry
# ---------------------------------------------------------------------------

def test_corrected_distance_normal_incidence():
    g = SetupGeometry(delta_z=0.1, delta_x=0.01, delta_c=0.02)
    assert corrected_distance(10.0, 0.0, g) == pytest.approx(10.0 - 0.1 + 0.02, rel=1e-15)


def test_corrected_distance_golden():
    # 10 - 0.1 + 0.02/cos(60) - 0.01*tan(60), evaluated at 50 digits
    g = SetupGeometry(delta_z=0.1, delta_x=0.01, delta_c=0.02)
    assert corrected_distance(10.0, math.radians(60.0), g) == pytest.approx(
        9.9226794919243112, rel=1e-14
    )


def test_corrected_distance_even_without_lateral_offset():
    g = SetupGeometry(delta_z=0.05, delta_x=0.0, delta_c=0.03)
    for theta_deg in (10.0, 40.0, 70.0):
        theta = math.radians(theta_deg)
        assert corrected_distance(8.0, theta, g) == corrected_distance(8.0, -theta, g)


def test_corrected_distance_domain():
    with pytest.raises(DomainError):
        corrected_distance(10.0, math.pi / 2.0, SetupGeometry())


def test_measurement_error_definition():
    g = SetupGeometry(delta_z=0.1)
    rec = MeasurementRecord(depth=9.9, incidence_deg=0.0, interferometer=10.0)
    assert measurement_error(rec, g) == pytest.approx(9.9 - 9.9, abs=1e-15)
    rec2 = MeasurementRecord(depth=9.85, incidence_deg=0.0, interferometer=10.0)
    assert measurement_error(rec2, g) == pytest.approx(-0.05, rel=1e-12)


def test_measurement_error_round_trip(pulse, lms151):
    # build interferometer readings so that the recovered error equals a
    # known model exactly
    g = SetupGeometry(delta_z=0.08, delta_x=0.004, delta_c=0.015)
    for d in (1.0, 5.0, 10.0):
        for theta_deg in (0.0, 35.0, 80.0):
            theta = math.radians(theta_deg)
            e_inj = bias_error(d, theta, lms151, pulse)
            # sensor reads the true corrected distance plus the bias
            d_c_target = d  # interpret d as the true distance for this fixture
            depth_read = d_c_target + e_inj
            interferometer = d_c_target + g.delta_z - g.delta_c / math.cos(theta) + g.delta_x * math.tan(theta)
            rec = MeasurementRecord(
                depth=depth_read, incidence_deg=theta_deg, interferometer=interferometer
            )
            assert measurement_error(rec, g) == pytest.approx(e_inj, abs=1e-12)


def test_estimate_delta_z():
    records = [
        MeasurementRecord(depth=10.05, incidence_deg=0.0, interferometer=10.0),
        MeasurementRecord(depth=5.07, incidence_deg=0.0, interferometer=5.0),
        MeasurementRecord(depth=5.0, incidence_deg=30.0, interferometer=5.0),
    ]
    assert estimate_delta_z(records) == pytest.approx(0.06, rel=1e-12)
    with pytest.raises(DegenerateFitError):
        estimate_delta_z([records[2]])


# ---------------------------------------------------------------------------
# symmetric averaging
# ---------------------------------------------------------------------------

def test_symmetric_average_pairs():
    records = [
        MeasurementRecord(depth=5.0, incidence_deg=70.0, error=-0.03),
        MeasurementRecord(depth=5.0, incidence_deg=-70.0, error=-0.05),
    ]
    out = symmetric_average(records)
    assert len(out) == 1
    assert out[0].depth == 5.0
    assert out[0].incidence_deg == pytest.approx(70.0)
    assert out[0].error == pytest.approx(-0.04, rel=1e-12)
    assert out[0].paired


def test_symmetric_average_singleton_flagged():
    out = symmetric_average([MeasurementRecord(depth=5.0, incidence_deg=80.0, error=-0.07)])
    assert len(out) == 1
    assert not out[0].paired
    assert out[0].error == -0.07


def test_symmetric_average_angle_tolerance():
    records = [
        MeasurementRecord(depth=5.0, incidence_deg=69.9, error=-0.02),
        MeasurementRecord(depth=5.0, incidence_deg=-70.1, error=-0.06),
    ]
    out = symmetric_average(records)
    assert len(out) == 1
    assert out[0].paired
    assert out[0].error == pytest.approx(-0.04, rel=1e-12)
    assert out[0].incidence_deg == pytest.approx(70.0)


def test_symmetric_average_separate_depths():
    records = [
        MeasurementRecord(depth=5.0, incidence_deg=70.0, error=-0.03),
        MeasurementRecord(depth=7.0, incidence_deg=-70.0, error=-0.05),
    ]
    out = symmetric_average(records)
    assert len(out) == 2
    assert not any(t.paired for t in out)


def test_symmetric_average_empty():
    assert symmetric_average([]) == []


def test_symmetric_average_computes_errors_from_geometry():
    g = SetupGeometry(delta_z=0.0)
    records = [
        MeasurementRecord(depth=4.98, incidence_deg=40.0, interferometer=5.0),
        MeasurementRecord(depth=4.96, incidence_deg=-40.0, interferometer=5.0),
    ]
    out = symmetric_average(records, geometry=g)
    assert out[0].error == pytest.approx(-0.03, rel=1e-9)


# ---------------------------------------------------------------------------
# scale-factor fitting
# ---------------------------------------------------------------------------

def test_fit_recovers_noiseless_parameters(pulse, lms151):
    tuples = synthesize_records(lms151, pulse, noise_sigma=0.0)
    data = tuples_to_fit_data(tuples)
    result = fit_scale_factors(data, half_aperture=lms151.half_aperture, pulse=pulse)
    assert result.s1 == pytest.approx(6.08, rel=1e-8)
    assert result.s2 == pytest.approx(3.18e-3, rel=1e-8)
    assert result.residual_rms < 1e-12


def test_fit_deterministic(pulse, lms151):
    tuples = synthesize_records(lms151, pulse, noise_sigma=5e-3,
                                rng=np.random.default_rng(7))
    data = tuples_to_fit_data(tuples)
    r1 = fit_scale_factors(data, half_aperture=lms151.half_aperture, pulse=pulse)
    r2 = fit_scale_factors(data, half_aperture=lms151.half_aperture, pulse=pulse)
    assert r1.s1 == r2.s1 and r1.s2 == r2.s2
    assert r1.residual_rms == r2.residual_rms


def test_fit_robust_matches_ols_without_outliers(pulse, lms151):
    tuples = synthesize_records(lms151, pulse, noise_sigma=1e-3,
                                rng=np.random.default_rng(3))
    data = tuples_to_fit_data(tuples)
    robust = fit_scale_factors(data, half_aperture=lms151.half_aperture, pulse=pulse,
                               loss="huber")
    ols = fit_scale_factors(data, half_aperture=lms151.half_aperture, pulse=pulse,
                            loss="squared")
    assert robust.s1 == pytest.approx(ols.s1, rel=2e-2)
    assert robust.s2 == pytest.approx(ols.s2, rel=5e-2)


def test_fit_degenerate_design(pulse, lms151):
    # a single repeated point makes the metric columns exactly collinear
    data = np.array([(5.0, math.radians(60.0), -0.01)] * 4)
    with pytest.raises(DegenerateFitError):
        fit_scale_factors(data, half_aperture=lms151.half_aperture, pulse=pulse)


def test_fit_single_angle_design_is_identifiable(pulse, lms151):
    # multiple depths at one angle still separate the factors: the
    # peak-shift metric grows with depth while the shape metric is
    # nearly depth-independent
    tuples = [(d, math.radians(60.0)) for d in (1.0, 2.0, 5.0, 10.0)]
    data = np.array([
        (d, t, bias_error(d, t, lms151, pulse)) for d, t in tuples
    ])
    result = fit_scale_factors(data, half_aperture=lms151.half_aperture, pulse=pulse)
    assert result.s1 == pytest.approx(6.08, rel=1e-6)
    assert result.s2 == pytest.approx(3.18e-3, rel=1e-6)


def test_fit_needs_offnormal_points(pulse, lms151):
    data = np.array([(5.0, 0.0, 0.0), (7.0, 0.0, 0.0)])
    with pytest.raises(DegenerateFitError):
        fit_scale_factors(data, half_aperture=lms151.half_aperture, pulse=pulse)


def test_fit_result_weights_summary(pulse, lms151):
    tuples = synthesize_records(lms151, pulse, noise_sigma=5e-3,
                                rng=np.random.default_rng(0),
                                outlier_fraction=0.05)
    result = fit_scale_factors(tuples_to_fit_data(tuples),
                               half_aperture=lms151.half_aperture, pulse=pulse)
    summary = result.weights_summary()
    assert 0.0 < summary["min"] < 1.0
    assert summary["downweighted_fraction"] > 0.0
    assert isinstance(result, FitResult)
    assert result.iterations >= 1


def test_fit_insensitive_to_power_and_wavelength(pulse, lms151):
    # refit with 10x emitted power and 2x wavelength: identical factors
    tuples = synthesize_records(lms151, pulse, noise_sigma=2e-3,
                                rng=np.random.default_rng(11))
    data = tuples_to_fit_data(tuples)
    base = fit_scale_factors(data, half_aperture=lms151.half_aperture, pulse=pulse)
    strong = fit_scale_factors(
        data, half_aperture=lms151.half_aperture,
        pulse=PulseParams(peak_power=3.9, pulse_length=50e-9),
    )
    assert strong.s1 == pytest.approx(base.s1, rel=1e-6)
    assert strong.s2 == pytest.approx(base.s2, rel=1e-6)


def test_fit_pulse_length_changes_surface_little(pulse, lms151):
    # refitting with tau = 25 or 100 ns reproduces the tau=50 ns bias
    # surface within 2% relative RMS on the reference grid
    tuples = synthesize_records(lms151, pulse, noise_sigma=0.0)
    data = tuples_to_fit_data(tuples)
    e_ref = data[:, 2]
    rms_ref = float(np.sqrt(np.mean(e_ref**2)))
    for tau in (25e-9, 100e-9):
        alt_pulse = PulseParams(peak_power=0.39, pulse_length=tau)
        refit = fit_scale_factors(data, half_aperture=lms151.half_aperture,
                                  pulse=alt_pulse)
        model = SensorModel(name="refit", half_aperture=lms151.half_aperture,
                            s1=refit.s1, s2=refit.s2)
        e_alt = bias_error(data[:, 0], data[:, 1], model, alt_pulse)
        rel_rms = float(np.sqrt(np.mean((e_alt - e_ref) ** 2))) / rms_ref
        assert rel_rms < 0.02


# ---------------------------------------------------------------------------
# exponential baseline
# ---------------------------------------------------------------------------

def test_pfister_self_consistency():
    truth = dict(c0=0.002, b=-0.0015, a=-1e-4, k=4.0)
    rng = np.random.default_rng(5)
    d = rng.uniform(1.0, 10.0, 40)
    theta = np.radians(rng.uniform(0.0, 85.0, 40))
    e = truth["c0"] + truth["b"] * d + truth["a"] * np.exp(truth["k"] * theta)
    model = fit_pfister(np.column_stack([d, theta, e]))
    assert model.c0 == pytest.approx(truth["c0"], abs=1e-6)
    assert model.b == pytest.approx(truth["b"], abs=1e-6)
    assert model.a == pytest.approx(truth["a"], abs=1e-6)
    assert model.k == pytest.approx(truth["k"], abs=1e-4)
    assert np.allclose(model.predict(d, theta), e, atol=1e-8)


def test_pfister_constant_data_tie_break():
    d = np.array([1.0, 2.0, 3.0, 4.0])
    theta = np.radians([10.0, 20.0, 30.0, 40.0])
    e = np.full(4, -0.0123)
    model = fit_pfister(np.column_stack([d, theta, e]))
    assert model.c0 == pytest.approx(-0.0123, rel=1e-12)
    assert model.b == 0.0
    assert model.a == 0.0
    assert model.k == 0.0


def test_pfister_misses_angle_dependent_slope(pulse, lms151):
    # physical-model data at two depths and two angles: the baseline
    # forces a common depth slope and cannot reproduce both angles
    pts = [(d, math.radians(a)) for d in (2.0, 10.0) for a in (10.0, 80.0)]
    data = np.array([
        (d, t, bias_error(d, t, lms151, pulse)) for d, t in pts
    ])
    baseline = fit_pfister(data)
    res_baseline = data[:, 2] - baseline.predict(data[:, 0], data[:, 1])
    model_fit = fit_scale_factors(data, half_aperture=lms151.half_aperture, pulse=pulse)
    assert np.sqrt(np.mean(res_baseline**2)) > model_fit.residual_rms
    # the fitted slope is unique while the true slopes differ by angle
    slope_10 = (data[2, 2] - data[0, 2]) / 8.0
    slope_80 = (data[3, 2] - data[1, 2]) / 8.0
    assert abs(slope_80) > abs(slope_10)


def test_pfister_preconditions():
    with pytest.raises(DegenerateFitError):
        fit_pfister(np.array([(1.0, 0.1, 0.0), (2.0, 0.1, 0.0), (3.0, 0.1, 0.0),
                              (4.0, 0.1, 0.0)]))
    with pytest.raises(DegenerateFitError):
        fit_pfister(np.array([(1.0, 0.1, 0.0), (1.0, 0.2, 0.0), (1.0, 0.3, 0.0)]))


# ---------------------------------------------------------------------------
# isocurves
# ---------------------------------------------------------------------------

def test_isocurve_zero_row_at_normal_incidence(pulse, lms151):
    d, theta_deg, e = isocurve_grid(lms151, pulse, resolution=(16, 16))
    assert theta_deg[0] == 0.0
    assert np.all(e[:, 0] == 0.0)
    assert np.all(np.isfinite(e))


def test_isocurve_magnitude_span(pulse, lms151):
    _, _, e = isocurve_grid(lms151, pulse, d_range=(1.0, 10.0),
                            theta_range_deg=(0.0, 85.0), resolution=(32, 32))
    assert 0.15 <= np.max(np.abs(e)) <= 0.40


def test_isocurve_deterministic(pulse, lms151):
    a = isocurve_grid(lms151, pulse, resolution=(8, 8))
    b = isocurve_grid(lms151, pulse, resolution=(8, 8))
    assert np.array_equal(a[2], b[2])


def test_isocurve_csv_round_trip(tmp_path, pulse, lms151):
    d, theta_deg, e = isocurve_grid(lms151, pulse, resolution=(4, 4))
    path = tmp_path / "iso.csv"
    write_isocurve_csv(path, d, theta_deg, e)
    rows = path.read_text().strip().splitlines()
    assert rows[0] == "d_m,theta_deg,error_m"
    assert len(rows) == 1 + 16
    first = rows[1].split(",")
    assert float(first[0]) == d[0]
    assert float(first[2]) == e[0, 0]


# ---------------------------------------------------------------------------
# measurement CSV
# ---------------------------------------------------------------------------

def test_measurement_csv_round_trip(tmp_path, pulse, lms151):
    tuples = synthesize_records(lms151, pulse, noise_sigma=1e-3,
                                rng=np.random.default_rng(2))
    path = tmp_path / "bench.csv"
    write_measurement_csv(path, "LMS151", tuples)
    sensors, arr = read_measurement_csv(path)
    assert set(sensors) == {"LMS151"}
    assert arr.shape == (96, 4)
    assert np.allclose(arr[:, 0], [t.depth for t in tuples])
    assert np.allclose(arr[:, 2], [t.error for t in tuples])


def test_measurement_csv_header_check(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b,c\n1,2,3\n", encoding="utf-8")
    with pytest.raises(ValueError, match="header"):
        read_measurement_csv(path)


def test_reference_grid_structure():
    grid = reference_grid()
    assert grid.shape == (96, 2)
    assert GRID_ANGLES_DEG == (0, 10, 20, 30, 40, 50, 60, 65, 70, 75, 80, 85)
    assert GRID_DEPTHS == (1.0, 2.0, 2.5, 3.0, 4.0, 5.0, 7.0, 10.0)
    assert len(set(map(tuple, grid))) == 96
