"""Calibration-bench data handling and scale-factor fitting.

The calibration rig measures a rotatable board at a set of depths and
board orientations against an interferometer ground truth.  This module
applies the rig-geometry correction, averages the signed-angle pairs
that cancel the residual alignment errors, and fits the two per-sensor
scale factors by robust least squares.  The empirical exponential model
and the dense isocurve grid used for comparison plots live here too.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize_scalar

from .closed_form import delta_distance, delta_shape
from .exceptions import DegenerateFitError, DomainError, FitFailureError
from .sensors import SensorModel
from .waveform import DEFAULT_WAVELENGTH, BeamGeometry, PulseParams

#: Board orientations of the reference measurement grid (degrees).
GRID_ANGLES_DEG = tuple(range(0, 61, 10)) + tuple(range(65, 86, 5))
#: Depths of the reference measurement grid (meters).
GRID_DEPTHS = (1.0, 2.0, 2.5, 3.0, 4.0, 5.0, 7.0, 10.0)

#: Huber tuning constant (times the MAD-based scale estimate).
HUBER_C = 1.345
#: Consistency factor turning a Gaussian MAD into a standard deviation.
_MAD_TO_SIGMA = 0.6745


@dataclass(frozen=True)
class SetupGeometry:
    """Static offsets of the bench: interferometer-to-sensor offset
    ``delta_z``, lateral sensor offset ``delta_x``, and board-to-rotation
    -centre distance ``delta_c`` (all meters)."""

    delta_z: float = 0.0
    delta_x: float = 0.0
    delta_c: float = 0.0

    def __post_init__(self):
        for name in ("delta_z", "delta_x", "delta_c"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")
        if self.delta_c < 0.0:
            raise DomainError("delta_c must be non-negative")


@dataclass
class MeasurementRecord:
    """One aggregated bench measurement: sensor reading ``depth``,
    signed board angle ``incidence_deg``, interferometer reference
    ``interferometer``, optional precomputed ``error`` and the sample
    dispersion over the recording window."""

    depth: float
    incidence_deg: float
    interferometer: float = 0.0
    error: float | None = None
    dispersion: float = 0.0

    def __post_init__(self):
        if not self.depth > 0.0:
            raise DomainError(f"depth must be positive, got {self.depth}")
        if abs(self.incidence_deg) > 89.0:
            raise DomainError(f"|incidence_deg| must be <= 89, got {self.incidence_deg}")
        if self.dispersion < 0.0:
            raise DomainError("dispersion must be non-negative")


@dataclass(frozen=True)
class AveragedTuple:
    """A (depth, |angle|) group after sign-symmetric averaging."""

    depth: float
    incidence_deg: float
    error: float
    dispersion: float
    paired: bool


@dataclass
class FitResult:
    """Outcome of a scale-factor fit."""

    s1: float
    s2: float
    residual_rms: float
    iterations: int
    weights: np.ndarray = field(repr=False)

    def weights_summary(self) -> dict:
        w = self.weights
        return {
            "min": float(w.min()),
            "median": float(np.median(w)),
            "downweighted_fraction": float(np.mean(w < 1.0)),
        }


@dataclass(frozen=True)
class PfisterModel:
    """Empirical exponential bias baseline ``c0 + b d + a exp(k theta)``
    (theta in radians)."""

    c0: float
    b: float
    a: float
    k: float

    def predict(self, d, theta):
        d = np.asarray(d, dtype=float)
        theta = np.asarray(theta, dtype=float)
        out = self.c0 + self.b * d + self.a * np.exp(self.k * theta)
        return out if out.ndim else float(out)


def corrected_distance(interferometer: float, theta: float, geometry: SetupGeometry):
    """Distance the sensor should have returned, given the interferometer
    reading ``D`` and the board angle ``theta`` (radians):

        D_c = D - delta_z + delta_c / cos(theta) - delta_x * tan(theta)
    """
    theta = np.asarray(theta, dtype=float)
    if np.any(np.abs(theta) >= math.pi / 2.0):
        raise DomainError("corrected_distance requires |theta| < pi/2")
    out = (
        np.asarray(interferometer, dtype=float)
        - geometry.delta_z
        + geometry.delta_c / np.cos(theta)
        - geometry.delta_x * np.tan(theta)
    )
    return out if out.ndim else float(out)


def measurement_error(record: MeasurementRecord, geometry: SetupGeometry) -> float:
    """Range bias of one record: sensor reading minus corrected ground
    truth (negative when the sensor under-ranges)."""
    d_c = corrected_distance(
        record.interferometer, math.radians(record.incidence_deg), geometry
    )
    return record.depth - d_c


def estimate_delta_z(records: list[MeasurementRecord]) -> float:
    """Offset between sensor and interferometer: the mean of
    (depth - interferometer) over the normal-incidence records."""
    diffs = [r.depth - r.interferometer for r in records if r.incidence_deg == 0.0]
    if not diffs:
        raise DegenerateFitError("no records at 0 degrees to estimate delta_z from")
    return float(np.mean(diffs))


def symmetric_average(
    records: list[MeasurementRecord],
    geometry: SetupGeometry | None = None,
    angle_tol_deg: float = 0.25,
    depth_tol: float = 0.1,
) -> list[AveragedTuple]:
    """Average errors across signed board angles.

    Records are grouped by depth and |angle| (matching within
    ``angle_tol_deg`` and ``depth_tol``); each +theta/-theta group is
    averaged, cancelling the rig's lateral-offset and residual-yaw
    contributions, which are odd in theta.  The depth tolerance covers
    the sign-dependent bias in the sensor readings of one rail position,
    which is far below the rail step between positions.  Groups with a
    single sign pass through with ``paired=False``.  Errors missing from
    a record are computed from ``geometry``.
    """
    out: list[AveragedTuple] = []
    if not records:
        return out

    def error_of(r: MeasurementRecord) -> float:
        if r.error is not None:
            return r.error
        if geometry is None:
            raise DomainError(
                "records carry no precomputed error and no geometry was given"
            )
        return measurement_error(r, geometry)

    groups: list[list[MeasurementRecord]] = []
    keys: list[tuple[float, float]] = []
    for r in sorted(records, key=lambda r: (r.depth, abs(r.incidence_deg))):
        for key, group in zip(keys, groups):
            if (
                abs(r.depth - key[0]) <= depth_tol
                and abs(abs(r.incidence_deg) - key[1]) <= angle_tol_deg
            ):
                group.append(r)
                break
        else:
            keys.append((r.depth, abs(r.incidence_deg)))
            groups.append([r])
    for (depth, angle), group in zip(keys, groups):
        signs = {math.copysign(1.0, r.incidence_deg) if r.incidence_deg != 0.0 else 0.0
                 for r in group}
        paired = len(signs) > 1
        out.append(
            AveragedTuple(
                depth=float(np.mean([r.depth for r in group])),
                incidence_deg=float(np.mean([abs(r.incidence_deg) for r in group])),
                error=float(np.mean([error_of(r) for r in group])),
                dispersion=float(np.mean([r.dispersion for r in group])),
                paired=paired,
            )
        )
    return out


def _metric_design(
    d, theta, half_aperture: float, pulse: PulseParams,
    wavelength: float = DEFAULT_WAVELENGTH,
) -> np.ndarray:
    beam = BeamGeometry(wavelength=wavelength, half_aperture=half_aperture)
    d = np.asarray(d, dtype=float)
    theta = np.asarray(theta, dtype=float)
    col_d = np.zeros_like(d)
    col_s = np.zeros_like(d)
    nz = theta > 0.0
    if np.any(nz):
        col_d[nz] = delta_distance(d[nz], theta[nz], pulse, beam)
        col_s[nz] = delta_shape(d[nz], theta[nz], pulse, beam)
    return np.column_stack([col_d, col_s])


def _huber_weights(residuals: np.ndarray, c: float) -> tuple[np.ndarray, float]:
    med = np.median(residuals)
    scale = np.median(np.abs(residuals - med)) / _MAD_TO_SIGMA
    if scale <= 0.0:
        return np.ones_like(residuals), 0.0
    u = np.abs(residuals) / (c * scale)
    weights = np.ones_like(u)
    heavy = u > 1.0
    weights[heavy] = 1.0 / u[heavy]
    return weights, scale


def fit_scale_factors(
    data,
    half_aperture: float,
    pulse: PulseParams | None = None,
    loss: str = "huber",
    max_iter: int = 100,
    tol: float = 1e-10,
    wavelength: float = DEFAULT_WAVELENGTH,
) -> FitResult:
    """Fit the scale factors (s1, s2) of the bias model to calibration
    triples ``(d, theta, e)`` (theta in radians).

    The model is linear in (s1, s2) once the two metrics are evaluated,
    so ``loss="squared"`` is a single least-squares solve and
    ``loss="huber"`` runs iteratively reweighted least squares with the
    Huber weight at ``HUBER_C`` times a MAD scale re-estimated each
    iteration, stopping when the parameters move by less than ``tol``
    relative.
    """
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise DomainError("data must be an iterable of (d, theta, e) triples")
    if pulse is None:
        pulse = PulseParams()
    d, theta, e = arr[:, 0], arr[:, 1], arr[:, 2]
    if np.count_nonzero(theta > 0.0) < 2:
        raise DegenerateFitError("need at least two data points with theta > 0")
    X = _metric_design(d, theta, half_aperture, pulse, wavelength)

    sv = np.linalg.svd(X, compute_uv=False)
    if sv[-1] <= sv[0] * 1e-12:
        raise DegenerateFitError(
            "design is rank deficient (collinear metric columns); cannot separate s1 and s2"
        )

    beta, *_ = np.linalg.lstsq(X, e, rcond=None)
    iterations = 1
    weights = np.ones_like(e)
    if loss == "huber":
        for _ in range(max_iter):
            residuals = e - X @ beta
            weights, scale = _huber_weights(residuals, HUBER_C)
            if scale == 0.0:
                break
            Xw = X * weights[:, None]
            beta_new = np.linalg.solve(X.T @ Xw, Xw.T @ e)
            iterations += 1
            if np.linalg.norm(beta_new - beta) <= tol * max(np.linalg.norm(beta), 1e-300):
                beta = beta_new
                break
            beta = beta_new
    elif loss != "squared":
        raise ValueError(f"unknown loss {loss!r}")

    residuals = e - X @ beta
    return FitResult(
        s1=float(beta[0]),
        s2=float(beta[1]),
        residual_rms=float(np.sqrt(np.mean(residuals**2))),
        iterations=iterations,
        weights=weights,
    )


def fit_pfister(data, k_max: float = 20.0, k_tol: float = 1e-12) -> PfisterModel:
    """Fit the exponential baseline ``c0 + b d + a exp(k theta)``.

    Given ``k`` the remaining parameters are linear, so the fit is a
    bounded one-dimensional search over ``k`` with an inner linear
    solve.  Constant data degenerates to ``(c0=e, b=0, a=0, k=0)``.
    """
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise DomainError("data must be an iterable of (d, theta, e) triples")
    d, theta, e = arr[:, 0], arr[:, 1], arr[:, 2]
    if len(e) < 4 or len(set(d)) < 2 or len(set(theta)) < 2:
        raise DegenerateFitError(
            "need at least 4 points spanning 2 depths and 2 angles"
        )
    if np.ptp(e) == 0.0:
        return PfisterModel(c0=float(e[0]), b=0.0, a=0.0, k=0.0)

    def solve_linear(k):
        X = np.column_stack([np.ones_like(d), d, np.exp(k * theta)])
        coef, *_ = np.linalg.lstsq(X, e, rcond=None)
        res = e - X @ coef
        return coef, float(res @ res)

    def objective(k):
        return solve_linear(k)[1]

    result = minimize_scalar(
        objective, bounds=(0.0, k_max), method="bounded",
        options={"xatol": k_tol, "maxiter": 500},
    )
    if not result.success:
        raise FitFailureError(f"exponential-rate search did not converge: {result.message}")
    k = float(result.x)
    coef, _ = solve_linear(k)
    if abs(coef[2]) < 1e-15 * max(1.0, float(np.max(np.abs(e)))):
        # amplitude is zero: k is unidentifiable, collapse to the tie-break
        coef2, _ = solve_linear(0.0)
        return PfisterModel(c0=float(coef2[0]), b=float(coef2[1]), a=0.0, k=0.0)
    return PfisterModel(c0=float(coef[0]), b=float(coef[1]), a=float(coef[2]), k=k)


def isocurve_grid(
    model: SensorModel,
    pulse: PulseParams | None = None,
    d_range: tuple[float, float] = (1.0, 10.0),
    theta_range_deg: tuple[float, float] = (0.0, 85.0),
    resolution: tuple[int, int] = (64, 64),
):
    """Dense rectangular grid of the bias surface.

    Returns ``(d, theta_deg, e)`` where ``d`` has shape (nd,),
    ``theta_deg`` (nt,), and ``e`` (nd, nt).
    """
    from .closed_form import bias_error

    if pulse is None:
        pulse = PulseParams()
    d = np.linspace(d_range[0], d_range[1], resolution[0])
    theta_deg = np.linspace(theta_range_deg[0], theta_range_deg[1], resolution[1])
    dd, tt = np.meshgrid(d, np.radians(theta_deg), indexing="ij")
    e = bias_error(dd.ravel(), tt.ravel(), model, pulse, policy="strict").reshape(dd.shape)
    return d, theta_deg, e


# ---------------------------------------------------------------------------
# CSV interfaces
# ---------------------------------------------------------------------------

CSV_HEADER = ("sensor", "d_m", "theta_deg", "error_m", "dispersion_m")


def write_measurement_csv(path: str | Path, sensor: str, rows) -> None:
    """Write aggregated tuples as `sensor,d_m,theta_deg,error_m,dispersion_m`."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for row in rows:
            if isinstance(row, AveragedTuple):
                writer.writerow(
                    [sensor, repr(row.depth), repr(row.incidence_deg),
                     repr(row.error), repr(row.dispersion)]
                )
            else:
                d, theta_deg, e, disp = row
                writer.writerow([sensor, repr(d), repr(theta_deg), repr(e), repr(disp)])


def read_measurement_csv(path: str | Path):
    """Read a measurement CSV; returns ``(sensor_names, array)`` where the
    array columns are d_m, theta_deg, error_m, dispersion_m."""
    sensors: list[str] = []
    rows: list[list[float]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(h.strip() for h in header) != CSV_HEADER:
            raise ValueError(
                f"unexpected CSV header {header!r}; expected {','.join(CSV_HEADER)}"
            )
        for record in reader:
            if not record:
                continue
            sensors.append(record[0])
            rows.append([float(v) for v in record[1:5]])
    return sensors, np.asarray(rows, dtype=float)


def write_isocurve_csv(path: str | Path, d, theta_deg, e) -> None:
    """Write an isocurve grid as `d_m,theta_deg,error_m` rows."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("d_m", "theta_deg", "error_m"))
        for i, di in enumerate(d):
            for j, tj in enumerate(theta_deg):
                writer.writerow([repr(float(di)), repr(float(tj)), repr(float(e[i, j]))])


# ---------------------------------------------------------------------------
# Synthetic bench data
# ---------------------------------------------------------------------------

def reference_grid() -> np.ndarray:
    """The 96 (depth, angle_deg) tuples of the reference bench campaign."""
    return np.array([(d, a) for d in GRID_DEPTHS for a in GRID_ANGLES_DEG], dtype=float)


def synthesize_records(
    model: SensorModel,
    pulse: PulseParams | None = None,
    noise_sigma: float = 0.0,
    rng: np.random.Generator | None = None,
    outlier_fraction: float = 0.0,
    outlier_magnitude: float = 0.1,
) -> list[AveragedTuple]:
    """Generate a synthetic bench campaign on the reference grid.

    Mirrors the physical procedure: each non-zero angle is measured at
    +theta and -theta with independent noise of ``noise_sigma`` and the
    pair is averaged; the 0-degree tuple is a single record.  Gross
    outliers of ``+/- outlier_magnitude`` hit a ``outlier_fraction``
    share of the averaged tuples.  Deterministic given ``rng``.
    """
    from .closed_form import bias_error

    if pulse is None:
        pulse = PulseParams()
    if rng is None:
        rng = np.random.default_rng(0)
    grid = reference_grid()
    e_true = bias_error(grid[:, 0], np.radians(grid[:, 1]), model, pulse, policy="strict")
    out: list[AveragedTuple] = []
    for (d, a_deg), e in zip(grid, e_true):
        n_rep = 1 if a_deg == 0.0 else 2
        noise = rng.normal(0.0, noise_sigma, size=n_rep) if noise_sigma > 0 else np.zeros(n_rep)
        out.append(
            AveragedTuple(
                depth=float(d),
                incidence_deg=float(a_deg),
                error=float(e + noise.mean()),
                dispersion=float(noise_sigma),
                paired=n_rep == 2,
            )
        )
    if outlier_fraction > 0.0:
        n_out = max(1, int(round(outlier_fraction * len(out))))
        idx = rng.choice(len(out), size=n_out, replace=False)
        signs = rng.choice([-1.0, 1.0], size=n_out)
        for i, s in zip(idx, signs):
            t = out[i]
            out[i] = AveragedTuple(
                depth=t.depth, incidence_deg=t.incidence_deg,
                error=t.error + s * outlier_magnitude,
                dispersion=t.dispersion, paired=t.paired,
            )
    return out


def tuples_to_fit_data(tuples: list[AveragedTuple]) -> np.ndarray:
    """Convert averaged tuples to the (d, theta_rad, e) array the fitters take."""
    return np.array(
        [(t.depth, math.radians(t.incidence_deg), t.error) for t in tuples], dtype=float
    )
