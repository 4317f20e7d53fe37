"""Per-sensor bias model parameters and their plain-text config format.

A sensor is characterised by its aperture half-angle and the two fitted
scale factors that weight the peak-shift and peak-curvature metrics.
Configs are `key = value` text files with the keys ``name``,
``alpha_deg``, ``s1`` and ``s2``; unknown keys are ignored so fit
reports stay loadable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .exceptions import DomainError


@dataclass(frozen=True)
class SensorModel:
    """Bias model of one sensor: ``e(d, theta) = s1 * delta_d + s2 * delta_shape``.

    ``s1`` is dimensionless (scales a length); ``s2`` carries meters
    (scales the dimensionless curvature ratio into a length).
    """

    name: str
    half_aperture: float
    s1: float
    s2: float

    def __post_init__(self):
        if not self.half_aperture > 0.0:
            raise DomainError(f"half_aperture must be positive, got {self.half_aperture}")
        if not (math.isfinite(self.s1) and math.isfinite(self.s2)):
            raise DomainError("scale factors must be finite")


PRESET_NAMES = ("LMS151", "RS-LiDAR-16", "HDL-32E")

_PRESET_FILES = {
    "LMS151": "lms151.cfg",
    "RS-LiDAR-16": "rs_lidar_16.cfg",
    "HDL-32E": "hdl_32e.cfg",
}


def _parse_config_text(text: str, source: str) -> SensorModel:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    missing = {"name", "alpha_deg", "s1", "s2"} - values.keys()
    if missing:
        raise ValueError(f"{source}: missing keys {sorted(missing)}")
    return SensorModel(
        name=values["name"],
        half_aperture=math.radians(float(values["alpha_deg"])),
        s1=float(values["s1"]),
        s2=float(values["s2"]),
    )


def load_preset(name: str) -> SensorModel:
    """Load one of the bundled sensor presets by name."""
    if name not in _PRESET_FILES:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}")
    ref = resources.files(__package__).joinpath("presets", _PRESET_FILES[name])
    return _parse_config_text(ref.read_text(encoding="utf-8"), str(ref))


def load_sensor_config(path_or_name: str | Path) -> SensorModel:
    """Load a sensor model from a config file path or a preset name."""
    if isinstance(path_or_name, str) and path_or_name in _PRESET_FILES:
        return load_preset(path_or_name)
    path = Path(path_or_name)
    if not path.exists():
        raise FileNotFoundError(
            f"no such sensor config file or preset: {path_or_name!r}"
        )
    return _parse_config_text(path.read_text(encoding="utf-8"), str(path))


def save_sensor_config(model: SensorModel, path: str | Path, extra: dict | None = None) -> None:
    """Write a sensor model as a key/value config, optionally with extra
    keys (e.g. fit diagnostics); extras are ignored on load."""
    lines = [
        f"name = {model.name}",
        f"alpha_deg = {math.degrees(model.half_aperture):.6g}",
        f"s1 = {model.s1!r}",
        f"s2 = {model.s2!r}",
    ]
    for key, value in (extra or {}).items():
        lines.append(f"{key} = {value}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
