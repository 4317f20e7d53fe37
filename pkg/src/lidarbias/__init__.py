"""Incidence-angle range bias modelling and correction for scanning LIDARs."""

from .calibration import (
    FitResult,
    MeasurementRecord,
    PfisterModel,
    SetupGeometry,
    corrected_distance,
    fit_pfister,
    fit_scale_factors,
    isocurve_grid,
    measurement_error,
    symmetric_average,
)
from .closed_form import (
    CubicCoefficients,
    TaylorIntermediates,
    bias_error,
    cubic_coefficients,
    curvature_at_peak,
    delta_distance,
    delta_shape,
)
from .cloud import (
    CorrectionReport,
    PointCloud,
    angle_cutoff_filter,
    correct_cloud,
    correct_point,
    estimate_normals,
    incidence_angle,
)
from .corridor import (
    BendMetric,
    CorridorSpec,
    ScanPose,
    accumulate,
    bend_metric,
    demo_pipeline,
    simulate_scan,
)
from .estimators import (
    IncidenceAngleFilter,
    IncidenceBiasModel,
    PfisterBiasModel,
    PointCloudCorrector,
)
from .sensors import SensorModel, load_preset, load_sensor_config, save_sensor_config
from .waveform import (
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

__version__ = "0.1.0"

__all__ = [
    "BeamGeometry",
    "BendMetric",
    "C_LIGHT",
    "CorrectionReport",
    "CorridorSpec",
    "CubicCoefficients",
    "FitResult",
    "IncidenceAngleFilter",
    "IncidenceBiasModel",
    "MeasurementRecord",
    "PfisterBiasModel",
    "PfisterModel",
    "PointCloud",
    "PointCloudCorrector",
    "PulseParams",
    "SampledWaveform",
    "ScanPose",
    "SensorModel",
    "SetupGeometry",
    "SurfaceTarget",
    "TaylorIntermediates",
    "accumulate",
    "angle_cutoff_filter",
    "beam_intensity",
    "bend_metric",
    "bias_error",
    "corrected_distance",
    "correct_cloud",
    "correct_point",
    "cubic_coefficients",
    "curvature_at_peak",
    "delta_distance",
    "delta_shape",
    "demo_pipeline",
    "emitted_pulse",
    "estimate_normals",
    "fit_pfister",
    "fit_scale_factors",
    "incidence_angle",
    "isocurve_grid",
    "load_preset",
    "load_sensor_config",
    "measurement_error",
    "peak_time",
    "point_geometry",
    "projected_energy",
    "return_waveform_2d",
    "return_waveform_full",
    "save_sensor_config",
    "simulate_scan",
    "symmetric_average",
]
