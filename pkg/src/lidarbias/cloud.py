"""Point-cloud bias correction: normals, incidence angles, de-biasing.

Ranges measured at high incidence are systematically short, so the
correction pushes every point outward along its viewing ray by the
modelled bias at its (range, incidence) pair.  Normals come either
with the cloud or from a k-nearest-neighbour plane fit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from .closed_form import DOMAIN_THETA_MAX, bias_error, domain_clamp
from .exceptions import AlreadyCorrectedError, DomainError
from .sensors import SensorModel
from .waveform import PulseParams

#: Per-point outcome flags used in CorrectionReport.flags.
FLAG_CORRECTED = 0
FLAG_CLAMPED = 1
FLAG_SKIPPED = 2


@dataclass
class PointCloud:
    """Points in the sensor frame with optional unit normals.

    ``normal_valid`` marks points whose normal estimation succeeded;
    it is all-true when normals are supplied externally.  ``corrected``
    is a provenance flag preventing double application of the bias
    correction.
    """

    points: np.ndarray
    normals: np.ndarray | None = None
    sensor_origin: np.ndarray = field(default_factory=lambda: np.zeros(3))
    normal_valid: np.ndarray | None = None
    corrected: bool = False

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if self.points.shape[1] != 3:
            raise DomainError("points must have shape (n, 3)")
        self.sensor_origin = np.asarray(self.sensor_origin, dtype=float).reshape(3)
        if self.normals is not None:
            self.normals = np.atleast_2d(np.asarray(self.normals, dtype=float))
            if self.normals.shape != self.points.shape:
                raise DomainError("normals must match points in shape")
            if self.normal_valid is None:
                self.normal_valid = np.ones(len(self.points), dtype=bool)
            else:
                self.normal_valid = np.asarray(self.normal_valid, dtype=bool).reshape(
                    len(self.points)
                )
            norms = np.linalg.norm(self.normals[self.normal_valid], axis=1)
            if norms.size and np.any(np.abs(norms - 1.0) > 1e-9):
                raise DomainError("normals must have unit norm (within 1e-9)")

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class CorrectionReport:
    """Per-cloud accounting of the correction outcome."""

    corrected_count: int
    clamped_count: int
    skipped_count: int
    max_correction: float
    flags: np.ndarray = field(repr=False)

    def to_keyvalue(self) -> str:
        return (
            f"corrected = {self.corrected_count}\n"
            f"clamped = {self.clamped_count}\n"
            f"skipped = {self.skipped_count}\n"
            f"max_correction_m = {self.max_correction!r}\n"
        )

    def __str__(self) -> str:
        total = self.corrected_count + self.clamped_count + self.skipped_count
        return (
            f"corrected {self.corrected_count}/{total} points "
            f"({self.clamped_count} clamped to the validity domain, "
            f"{self.skipped_count} skipped); "
            f"largest correction {self.max_correction:.4f} m"
        )


def _is_planar(points: np.ndarray, origin: np.ndarray) -> bool:
    # a genuine 2D sweep has all points and the sensor in one z plane;
    # a constant-z wall seen from elsewhere is a 3D neighbourhood problem
    return bool(
        np.ptp(points[:, 2]) < 1e-12 and abs(points[0, 2] - origin[2]) < 1e-12
    )


def estimate_normals(cloud: PointCloud, k: int = 20, mode: str = "auto") -> PointCloud:
    """Estimate per-point normals from the ``k`` nearest neighbours.

    Each point's normal is the smallest-eigenvalue eigenvector of its
    neighbourhood covariance, oriented toward the sensor.  Planar scans
    (points and sensor all in one z plane, e.g. a single 2D sweep) are
    handled in the x-y plane, where a line of points still has a
    well-defined in-plane normal; ``mode`` forces ``"2d"`` or ``"3d"``
    handling, ``"auto"`` detects it.
    Degenerate neighbourhoods (covariance rank < 2 in 3D, or all points
    coincident in 2D) yield an invalid-normal flag.
    """
    pts = cloud.points
    if k < 3:
        raise DomainError("k must be at least 3")
    if len(pts) < k + 1:
        raise DomainError(f"need at least k+1={k + 1} points, got {len(pts)}")
    if mode not in ("auto", "2d", "3d"):
        raise ValueError(f"unknown mode {mode!r}")
    planar = mode == "2d" or (mode == "auto" and _is_planar(pts, cloud.sensor_origin))

    coords = pts[:, :2] if planar else pts
    tree = cKDTree(coords)
    _, idx = tree.query(coords, k=k + 1)

    neighbourhoods = coords[idx]  # (n, k+1, dim)
    centred = neighbourhoods - neighbourhoods.mean(axis=1, keepdims=True)
    cov = np.einsum("nij,nik->njk", centred, centred)
    eigvals, eigvecs = np.linalg.eigh(cov)

    n = len(pts)
    normals = np.zeros((n, 3))
    if planar:
        # rank >= 1 needed: a line of points has an exact in-plane normal
        valid = eigvals[:, 1] > 1e-12 * np.maximum(eigvals[:, 1].max(), 1.0)
        normals[:, :2] = eigvecs[:, :, 0]
    else:
        # rank >= 2 needed: the mid eigenvalue must carry real extent
        valid = eigvals[:, 1] > 1e-9 * np.maximum(eigvals[:, 2], 1e-300)
        normals[:, :] = eigvecs[:, :, 0]

    to_sensor = cloud.sensor_origin[None, :] - pts
    flip = np.einsum("ij,ij->i", normals, to_sensor) < 0.0
    normals[flip] *= -1.0
    norms = np.linalg.norm(normals, axis=1)
    ok = norms > 0.0
    normals[ok] /= norms[ok, None]
    valid = valid & ok

    return replace(cloud, normals=normals, normal_valid=valid)


def incidence_angle(point, normal, sensor_origin=(0.0, 0.0, 0.0)) -> float:
    """Incidence angle between the viewing ray and the surface normal,
    ``arccos(|normal . unit(origin - point)|)``, in [0, pi/2]."""
    point = np.asarray(point, dtype=float)
    normal = np.asarray(normal, dtype=float)
    ray = np.asarray(sensor_origin, dtype=float) - point
    norm = np.linalg.norm(ray)
    if norm == 0.0:
        raise DomainError("point coincides with the sensor origin")
    cos_t = abs(float(np.dot(normal, ray / norm)))
    return math.acos(min(max(cos_t, 0.0), 1.0))


def incidence_angles(cloud: PointCloud) -> np.ndarray:
    """Vectorised incidence angles for every point of a cloud with normals."""
    if cloud.normals is None:
        raise DomainError("cloud has no normals; run estimate_normals first")
    rays = cloud.sensor_origin[None, :] - cloud.points
    norms = np.linalg.norm(rays, axis=1)
    if np.any(norms == 0.0):
        raise DomainError("a point coincides with the sensor origin")
    cos_t = np.abs(np.einsum("ij,ij->i", cloud.normals, rays / norms[:, None]))
    return np.arccos(np.clip(cos_t, 0.0, 1.0))


def correct_point(
    point,
    theta: float,
    model: SensorModel,
    pulse: PulseParams | None = None,
    sensor_origin=(0.0, 0.0, 0.0),
):
    """De-bias one point: lengthen its range by the modelled short-fall.

    Returns ``(corrected_point, flag)`` where the flag is one of
    FLAG_CORRECTED / FLAG_CLAMPED (evaluated at the domain boundary).
    The viewing direction is preserved exactly.
    """
    if pulse is None:
        pulse = PulseParams()
    point = np.asarray(point, dtype=float)
    origin = np.asarray(sensor_origin, dtype=float)
    rel = point - origin
    d = float(np.linalg.norm(rel))
    if d == 0.0:
        raise DomainError("point coincides with the sensor origin")
    d_c, theta_c, clamped = domain_clamp(d, theta)
    e = bias_error(float(d_c), float(theta_c), model, pulse, policy="strict")
    corrected = origin + rel / d * (d - e)
    return corrected, (FLAG_CLAMPED if bool(clamped) else FLAG_CORRECTED)


def correct_cloud(
    cloud: PointCloud,
    model: SensorModel,
    pulse: PulseParams | None = None,
    k: int = 20,
    theta_correction_max: float = DOMAIN_THETA_MAX,
    normal_mode: str = "auto",
) -> tuple[PointCloud, CorrectionReport]:
    """Apply the bias correction to a whole cloud.

    Normals are estimated with ``k`` neighbours unless the cloud already
    carries them.  Points with invalid normals or incidence above
    ``theta_correction_max`` pass through unmodified and are counted as
    skipped: at high angles a small normal error changes the correction
    drastically, so capping is safer than extrapolating.  In-domain
    points are corrected; points outside the validity box are corrected
    at the clamped evaluation point and counted as clamped.
    """
    if pulse is None:
        pulse = PulseParams()
    if cloud.corrected:
        raise AlreadyCorrectedError(
            "cloud already carries the corrected flag; refusing to correct twice"
        )
    if len(cloud) == 0:
        raise DomainError("cloud is empty")
    work = cloud if cloud.normals is not None else estimate_normals(cloud, k=k, mode=normal_mode)

    theta = incidence_angles(work)
    rel = work.points - work.sensor_origin[None, :]
    d = np.linalg.norm(rel, axis=1)
    unit = rel / d[:, None]

    valid = work.normal_valid & (theta <= theta_correction_max) & (d > 0.0)
    d_c, theta_c, clamped = domain_clamp(d, theta)
    e = np.zeros_like(d)
    if np.any(valid):
        e[valid] = bias_error(d_c[valid], theta_c[valid], model, pulse, policy="strict")

    flags = np.full(len(work), FLAG_SKIPPED, dtype=int)
    flags[valid & ~clamped] = FLAG_CORRECTED
    flags[valid & clamped] = FLAG_CLAMPED

    new_points = work.points.copy()
    new_points[valid] = (
        work.sensor_origin[None, :] + unit[valid] * (d[valid] - e[valid])[:, None]
    )

    out = replace(work, points=new_points, corrected=True)
    report = CorrectionReport(
        corrected_count=int(np.sum(flags == FLAG_CORRECTED)),
        clamped_count=int(np.sum(flags == FLAG_CLAMPED)),
        skipped_count=int(np.sum(flags == FLAG_SKIPPED)),
        max_correction=float(np.max(np.abs(e))) if len(e) else 0.0,
        flags=flags,
    )
    return out, report


def angle_cutoff_filter(cloud: PointCloud, theta_max: float) -> PointCloud:
    """Baseline mitigation: drop every point whose incidence exceeds
    ``theta_max`` instead of correcting it."""
    if cloud.normals is None:
        raise DomainError("angle_cutoff_filter requires normals")
    theta = incidence_angles(cloud)
    keep = theta <= theta_max
    return PointCloud(
        points=cloud.points[keep],
        normals=cloud.normals[keep],
        sensor_origin=cloud.sensor_origin.copy(),
        normal_valid=cloud.normal_valid[keep],
        corrected=cloud.corrected,
    )


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

def write_ply(path, cloud: PointCloud) -> None:
    """ASCII PLY with x,y,z and, when present, nx,ny,nz."""
    has_normals = cloud.normals is not None
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {len(cloud)}\n")
        fh.write("property float x\nproperty float y\nproperty float z\n")
        if has_normals:
            fh.write("property float nx\nproperty float ny\nproperty float nz\n")
        fh.write("end_header\n")
        for i in range(len(cloud)):
            row = list(cloud.points[i])
            if has_normals:
                row += list(cloud.normals[i])
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_ply(path) -> PointCloud:
    """Read an ASCII PLY containing a vertex element with x,y,z and
    optional nx,ny,nz properties."""
    with open(path, encoding="utf-8") as fh:
        line = fh.readline().strip()
        if line != "ply":
            raise ValueError(f"{path}: not a PLY file")
        fmt = fh.readline().strip()
        if not fmt.startswith("format ascii"):
            raise ValueError(f"{path}: only ASCII PLY is supported")
        n_vertex = 0
        props: list[str] = []
        for line in fh:
            line = line.strip()
            if line.startswith("comment"):
                continue
            if line.startswith("element vertex"):
                n_vertex = int(line.split()[-1])
            elif line.startswith("element"):
                raise ValueError(f"{path}: unsupported element {line!r}")
            elif line.startswith("property"):
                props.append(line.split()[-1])
            elif line == "end_header":
                break
        needed = ["x", "y", "z"]
        has_normals = {"nx", "ny", "nz"} <= set(props)
        if not set(needed) <= set(props):
            raise ValueError(f"{path}: vertex element lacks x,y,z")
        cols = {name: props.index(name) for name in props}
        data = []
        for _ in range(n_vertex):
            data.append([float(v) for v in fh.readline().split()])
        arr = np.asarray(data, dtype=float)
    points = arr[:, [cols["x"], cols["y"], cols["z"]]]
    normals = arr[:, [cols["nx"], cols["ny"], cols["nz"]]] if has_normals else None
    return PointCloud(points=points, normals=normals)


def write_xyz_csv(path, cloud: PointCloud) -> None:
    """CSV `x,y,z[,nx,ny,nz]` with a header row."""
    has_normals = cloud.normals is not None
    header = "x,y,z,nx,ny,nz" if has_normals else "x,y,z"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for i in range(len(cloud)):
            row = list(cloud.points[i])
            if has_normals:
                row += list(cloud.normals[i])
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_xyz_csv(path) -> PointCloud:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        arr = np.loadtxt(fh, delimiter=",", ndmin=2)
    if header[:3] != ["x", "y", "z"]:
        raise ValueError(f"{path}: expected header starting with x,y,z")
    has_normals = header[3:6] == ["nx", "ny", "nz"]
    return PointCloud(
        points=arr[:, :3],
        normals=arr[:, 3:6] if has_normals else None,
    )
