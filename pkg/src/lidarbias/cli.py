"""Command-line interface.

Angles are degrees at this boundary (radians everywhere inside).
Machine-readable results go to the requested output files or stdout;
warnings and diagnostics go to stderr.  Exit codes: 0 success, 1
numeric or model failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import (
    fit_scale_factors,
    isocurve_grid,
    read_measurement_csv,
    write_isocurve_csv,
)
from .cloud import read_ply, read_xyz_csv, write_ply, write_xyz_csv
from .corridor import (
    CorridorSpec,
    accumulate,
    default_trajectory_2d,
    default_trajectory_3d,
    demo_pipeline,
)
from .exceptions import DomainError
from .sensors import SensorModel, load_sensor_config, save_sensor_config
from .waveform import (
    DEFAULT_PEAK_POWER,
    DEFAULT_PULSE_LENGTH,
    DEFAULT_WAVELENGTH,
    BeamGeometry,
    PulseParams,
    SurfaceTarget,
    peak_time,
    return_waveform_2d,
    return_waveform_full,
)

_NUMERIC_ERRORS = (DomainError, ValueError, RuntimeError, ArithmeticError, OSError)


def _pulse_from_args(args) -> PulseParams:
    return PulseParams(peak_power=args.i0, pulse_length=args.tau_ns * 1e-9)


def _add_pulse_options(parser):
    parser.add_argument("--tau-ns", type=float, default=DEFAULT_PULSE_LENGTH * 1e9,
                        help="pulse length tau in nanoseconds")
    parser.add_argument("--i0", type=float, default=DEFAULT_PEAK_POWER,
                        help="emitted peak intensity I0 in W/m^2")
    parser.add_argument("--wavelength-nm", type=float, default=DEFAULT_WAVELENGTH * 1e9,
                        help="laser wavelength in nanometers")


def _cmd_simulate_waveform(args) -> int:
    sensor = load_sensor_config(args.sensor_config)
    pulse = _pulse_from_args(args)
    beam = BeamGeometry(wavelength=args.wavelength_nm * 1e-9,
                        half_aperture=sensor.half_aperture)
    target = SurfaceTarget(depth=args.d, incidence=math.radians(args.theta_deg))
    simulate = return_waveform_2d if args.mode == "2d" else return_waveform_full
    wave = simulate(target, pulse, beam, n_samples=args.n_samples)
    lines = ["t_seconds,intensity"]
    for t, v in zip(wave.times, wave.samples):
        lines.append(f"{float(t)!r},{float(v)!r}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    print(f"peak_time_s = {peak_time(wave)!r}", file=sys.stderr)
    return 0


def _cmd_bias(args) -> int:
    from .closed_form import bias_error

    sensor = load_sensor_config(args.sensor_config)
    pulse = _pulse_from_args(args)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        e = bias_error(args.d, math.radians(args.theta_deg), sensor, pulse, policy="clamp")
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    print(f"{e:.6f}")
    return 0


def _cmd_isocurves(args) -> int:
    sensor = load_sensor_config(args.sensor_config)
    pulse = _pulse_from_args(args)
    d, theta_deg, e = isocurve_grid(
        sensor, pulse,
        d_range=(args.d_range[0], args.d_range[1]),
        theta_range_deg=(args.theta_range[0], args.theta_range[1]),
        resolution=(args.resolution, args.resolution),
    )
    write_isocurve_csv(args.out, d, theta_deg, e)
    print(f"wrote {len(d) * len(theta_deg)} grid points to {args.out}", file=sys.stderr)
    return 0


def _cmd_fit(args) -> int:
    sensors, arr = read_measurement_csv(args.data)
    result = fit_scale_factors(
        np.column_stack([arr[:, 0], np.radians(arr[:, 1]), arr[:, 2]]),
        half_aperture=math.radians(args.alpha_deg),
        pulse=_pulse_from_args(args),
        loss=args.loss,
    )
    name = sensors[0] if sensors else "fitted"
    model = SensorModel(name=name, half_aperture=math.radians(args.alpha_deg),
                        s1=result.s1, s2=result.s2)
    save_sensor_config(
        model, args.out_config,
        extra={"residual_rms_m": repr(result.residual_rms),
               "iterations": result.iterations},
    )
    print(f"s1 = {result.s1!r}", file=sys.stderr)
    print(f"s2 = {result.s2!r}", file=sys.stderr)
    print(f"residual_rms_m = {result.residual_rms!r}", file=sys.stderr)
    return 0


def _cmd_correct(args) -> int:
    from .cloud import correct_cloud

    sensor = load_sensor_config(args.sensor_config)
    pulse = _pulse_from_args(args)
    path = Path(args.input)
    reader = read_ply if path.suffix.lower() == ".ply" else read_xyz_csv
    cloud = reader(path)
    corrected, report = correct_cloud(
        cloud, sensor, pulse, k=args.k,
        theta_correction_max=math.radians(args.theta_max_deg),
    )
    out = Path(args.out)
    writer = write_ply if out.suffix.lower() == ".ply" else write_xyz_csv
    writer(out, corrected)
    print(report.to_keyvalue(), end="", file=sys.stderr)
    return 0


def _cmd_corridor_demo(args) -> int:
    sensor = load_sensor_config(args.sensor_config)
    pulse = _pulse_from_args(args)
    if args.preset == "2d":
        spec = CorridorSpec(length=94.0, width=2.0, height=0.0)
        trajectory = default_trajectory_2d(spec)
    else:
        spec = CorridorSpec(length=94.0, width=2.0, height=3.0)
        trajectory = default_trajectory_3d(spec)
    metric_unc, metric_cor, artifacts = demo_pipeline(
        spec, trajectory, sensor, pulse,
        correction=args.correction == "on",
        normals=args.normals,
        k=args.k,
        downsample_floor=args.preset == "3d",
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_ply(out_dir / "uncorrected.ply", artifacts["uncorrected_world"])
    lines = ["[uncorrected]", metric_unc.to_keyvalue()]
    profile = artifacts["uncorrected_profile"]
    rows = ["x_m,wall_id,deviation_m"]
    for x, w, dev in zip(profile.bin_centers, profile.wall_ids, profile.deviations):
        rows.append(f"{float(x)!r},{int(w)},{float(dev)!r}")
    (out_dir / "uncorrected_profile.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    if metric_cor is not None:
        write_ply(out_dir / "corrected.ply", artifacts["corrected_world"])
        lines += ["[corrected]", metric_cor.to_keyvalue()]
        profile = artifacts["corrected_profile"]
        rows = ["x_m,wall_id,deviation_m"]
        for x, w, dev in zip(profile.bin_centers, profile.wall_ids, profile.deviations):
            rows.append(f"{float(x)!r},{int(w)},{float(dev)!r}")
        (out_dir / "corrected_profile.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    (out_dir / "bend_metrics.txt").write_text("\n".join(lines), encoding="utf-8")
    print(f"demo artifacts written to {out_dir}", file=sys.stderr)
    if metric_cor is not None:
        print(f"rms_dev uncorrected = {metric_unc.rms_dev:.6f} m, "
              f"corrected = {metric_cor.rms_dev:.6f} m", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lidarbias",
        description="Incidence-angle range bias modelling and correction",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate-waveform", help="simulate a return waveform to CSV")
    p.add_argument("--d", type=float, required=True, help="target depth in meters")
    p.add_argument("--theta-deg", type=float, required=True, help="incidence angle in degrees")
    p.add_argument("--sensor-config", required=True,
                   help="sensor config file or preset name (for the aperture)")
    p.add_argument("--mode", choices=("2d", "full"), default="2d")
    p.add_argument("--n-samples", type=int, default=512)
    p.add_argument("--out", help="output CSV path (default: stdout)")
    _add_pulse_options(p)
    p.set_defaults(func=_cmd_simulate_waveform)

    p = sub.add_parser("bias", help="evaluate the bias model at one point")
    p.add_argument("--d", type=float, required=True)
    p.add_argument("--theta-deg", type=float, required=True)
    p.add_argument("--sensor-config", required=True)
    _add_pulse_options(p)
    p.set_defaults(func=_cmd_bias)

    p = sub.add_parser("isocurves", help="export the bias surface grid as CSV")
    p.add_argument("--sensor-config", required=True)
    p.add_argument("--d-range", type=float, nargs=2, default=(1.0, 10.0),
                   metavar=("MIN", "MAX"))
    p.add_argument("--theta-range", type=float, nargs=2, default=(0.0, 85.0),
                   metavar=("MIN", "MAX"), help="degrees")
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--out", required=True)
    _add_pulse_options(p)
    p.set_defaults(func=_cmd_isocurves)

    p = sub.add_parser("fit", help="fit scale factors to a measurement CSV")
    p.add_argument("--data", required=True, help="input CSV (sensor,d_m,theta_deg,error_m,dispersion_m)")
    p.add_argument("--alpha-deg", type=float, required=True)
    p.add_argument("--loss", choices=("huber", "squared"), default="huber")
    p.add_argument("--out-config", required=True)
    _add_pulse_options(p)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("correct", help="de-bias a point cloud file")
    p.add_argument("--in", dest="input", required=True, help="input PLY or CSV cloud")
    p.add_argument("--sensor-config", required=True)
    p.add_argument("--k", type=int, default=20, help="neighbours for normal estimation")
    p.add_argument("--theta-max-deg", type=float, default=85.0,
                   help="skip correction above this incidence")
    p.add_argument("--out", required=True)
    _add_pulse_options(p)
    p.set_defaults(func=_cmd_correct)

    p = sub.add_parser("corridor-demo", help="run the synthetic corridor drift demo")
    p.add_argument("--preset", choices=("2d", "3d"), default="2d")
    p.add_argument("--correction", choices=("on", "off"), default="on")
    p.add_argument("--normals", choices=("estimated", "exact"), default="estimated")
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--sensor-config", default="LMS151")
    p.add_argument("--out-dir", required=True)
    _add_pulse_options(p)
    p.set_defaults(func=_cmd_corridor_demo)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _NUMERIC_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
