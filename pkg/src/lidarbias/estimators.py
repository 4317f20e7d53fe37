"""Scikit-learn style wrappers around the bias model and cloud filters.

These estimators make the calibration fit and the point-cloud
correction composable with sklearn pipelines and model-selection
tooling.  Feature conventions: regression inputs are ``(n, 2)`` arrays
of ``(depth_m, incidence_rad)``; cloud transforms take ``(n, 3)``
point arrays or ``(n, 6)`` points-with-normals arrays.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_depth_incidence, check_point_array
from .calibration import fit_pfister, fit_scale_factors
from .closed_form import bias_error
from .cloud import PointCloud, angle_cutoff_filter, correct_cloud, estimate_normals
from .sensors import SensorModel, load_preset
from .waveform import DEFAULT_PEAK_POWER, DEFAULT_PULSE_LENGTH, PulseParams


def _resolve_sensor(sensor) -> SensorModel:
    if isinstance(sensor, SensorModel):
        return sensor
    return load_preset(sensor)


class IncidenceBiasModel(RegressorMixin, BaseEstimator):
    """Range-bias regression ``e = s1 * delta_distance + s2 * delta_shape``.

    The two metrics are fixed by the aperture half-angle and pulse
    length; only the scale factors are learned, by robust (Huber IRLS)
    or ordinary least squares.

    Parameters
    ----------
    alpha_deg : aperture half-angle of the sensor, degrees.
    tau : pulse length, seconds.
    loss : "huber" or "squared".
    max_iter, tol : IRLS stopping controls.
    """

    def __init__(self, alpha_deg=0.43, tau=DEFAULT_PULSE_LENGTH, loss="huber",
                 max_iter=100, tol=1e-10):
        self.alpha_deg = alpha_deg
        self.tau = tau
        self.loss = loss
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y):
        X = check_depth_incidence(X)
        y = np.asarray(y, dtype=float).reshape(-1)
        if len(y) != len(X):
            raise ValueError("X and y have inconsistent lengths")
        pulse = PulseParams(peak_power=DEFAULT_PEAK_POWER, pulse_length=self.tau)
        result = fit_scale_factors(
            np.column_stack([X, y]),
            half_aperture=math.radians(self.alpha_deg),
            pulse=pulse,
            loss=self.loss,
            max_iter=self.max_iter,
            tol=self.tol,
        )
        self.s1_ = result.s1
        self.s2_ = result.s2
        self.residual_rms_ = result.residual_rms
        self.n_iter_ = result.iterations
        self.sensor_model_ = SensorModel(
            name="fitted", half_aperture=math.radians(self.alpha_deg),
            s1=result.s1, s2=result.s2,
        )
        return self

    def predict(self, X):
        check_is_fitted(self, "sensor_model_")
        X = check_depth_incidence(X)
        pulse = PulseParams(peak_power=DEFAULT_PEAK_POWER, pulse_length=self.tau)
        return bias_error(X[:, 0], X[:, 1], self.sensor_model_, pulse, policy="clamp")


class PfisterBiasModel(RegressorMixin, BaseEstimator):
    """Empirical exponential baseline ``c0 + b d + a exp(k theta)``.

    Structurally unable to represent an incidence-dependent depth slope,
    which is exactly what the physical model predicts; kept for
    comparison.
    """

    def __init__(self, k_max=20.0):
        self.k_max = k_max

    def fit(self, X, y):
        X = check_depth_incidence(X)
        y = np.asarray(y, dtype=float).reshape(-1)
        if len(y) != len(X):
            raise ValueError("X and y have inconsistent lengths")
        self.model_ = fit_pfister(np.column_stack([X, y]), k_max=self.k_max)
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_depth_incidence(X)
        return self.model_.predict(X[:, 0], X[:, 1])


class PointCloudCorrector(TransformerMixin, BaseEstimator):
    """De-bias a point cloud; a stateless transformer.

    ``transform`` accepts ``(n, 3)`` points (normals are then estimated
    with ``k`` neighbours) or ``(n, 6)`` points with unit normals, and
    returns the corrected ``(n, 3)`` points.  The correction report of
    the last transform is kept on ``report_``.
    """

    def __init__(self, sensor="LMS151", k=20, theta_max_deg=85.0,
                 tau=DEFAULT_PULSE_LENGTH, sensor_origin=(0.0, 0.0, 0.0)):
        self.sensor = sensor
        self.k = k
        self.theta_max_deg = theta_max_deg
        self.tau = tau
        self.sensor_origin = sensor_origin

    def fit(self, X=None, y=None):
        self.sensor_model_ = _resolve_sensor(self.sensor)
        return self

    def transform(self, X):
        check_is_fitted(self, "sensor_model_")
        points, normals = check_point_array(X)
        cloud = PointCloud(
            points=points, normals=normals,
            sensor_origin=np.asarray(self.sensor_origin, dtype=float),
        )
        pulse = PulseParams(peak_power=DEFAULT_PEAK_POWER, pulse_length=self.tau)
        corrected, report = correct_cloud(
            cloud, self.sensor_model_, pulse, k=self.k,
            theta_correction_max=math.radians(self.theta_max_deg),
        )
        self.report_ = report
        return corrected.points


class IncidenceAngleFilter(TransformerMixin, BaseEstimator):
    """Cutoff baseline: discard points seen above ``theta_max_deg``.

    Simple and lossy; in corridor-like scenes a 65-degree cutoff removes
    the entire far field (and, for multi-beam sensors, floor and
    ceiling), which is what the correction approach avoids.
    """

    def __init__(self, theta_max_deg=65.0, k=20, sensor_origin=(0.0, 0.0, 0.0)):
        self.theta_max_deg = theta_max_deg
        self.k = k
        self.sensor_origin = sensor_origin

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        points, normals = check_point_array(X)
        cloud = PointCloud(
            points=points, normals=normals,
            sensor_origin=np.asarray(self.sensor_origin, dtype=float),
        )
        if cloud.normals is None:
            cloud = estimate_normals(cloud, k=self.k)
        kept = angle_cutoff_filter(cloud, math.radians(self.theta_max_deg))
        return kept.points
