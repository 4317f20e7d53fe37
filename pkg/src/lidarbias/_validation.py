"""Input validation helpers shared by the estimator layer."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array


def check_depth_incidence(X) -> np.ndarray:
    """Validate an (n, 2) array of depth [m] and incidence [rad] columns."""
    X = check_array(X, ensure_2d=True, dtype=float)
    if X.shape[1] != 2:
        raise ValueError(
            f"expected 2 columns (depth_m, incidence_rad), got {X.shape[1]}"
        )
    if np.any(X[:, 0] <= 0.0):
        raise ValueError("depth column must be positive")
    if np.any(X[:, 1] < 0.0) or np.any(X[:, 1] >= np.pi / 2.0):
        raise ValueError("incidence column must be in [0, pi/2) radians")
    return X


def check_point_array(X) -> tuple[np.ndarray, np.ndarray | None]:
    """Validate an (n, 3) point array or an (n, 6) points+normals array.

    Returns ``(points, normals_or_None)``.
    """
    X = check_array(X, ensure_2d=True, dtype=float)
    if X.shape[1] == 3:
        return X, None
    if X.shape[1] == 6:
        return X[:, :3], X[:, 3:6]
    raise ValueError(
        f"expected 3 columns (x,y,z) or 6 (x,y,z,nx,ny,nz), got {X.shape[1]}"
    )
