"""Command-line entry point.

Exit codes: 0 success, 1 bad input (flags, files, values), 2 computation
failure (a fit that does not converge, an impossible segmentation),
3 expected non-convergence (a reach that times out).
"""

from __future__ import annotations

import argparse
import configparser
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import dataio
from .errors import (ConfigurationError, DomainError, FitFailure, IncompleteDataError,
                     ParseError, RiseTimeNotFound, SegmentationError, SleeveError)
from .fitting import fit_torque_angle, fit_torque_pressure, reference_model
from .models import get_variant, predict_torque
from .pneumatics import dynamics_for, rise_time, simulate_first_order, square_wave, step_input
from .signals import emg_report
from .sleeve import (ArmParams, ReachConfig, ShoulderPose, default_layout,
                     simulate_reach, workspace_grid)

OUT_DIR_ENV = "PNEUSLEEVE_OUT_DIR"

EXIT_OK, EXIT_INPUT, EXIT_COMPUTE, EXIT_NO_CONVERGENCE = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    """Settings shared by the simulation commands.

    Loaded from an INI file with sections ``[run]`` (variant, output_dir),
    ``[layout]`` (per-placement variant), ``[arm]`` (mass_kg,
    gravity_torque_90_nm, gravity) and ``[simulation]`` (dt_s, duration_s,
    kp_nm_per_deg, damping_nm_s_per_deg, tolerance_deg, cocontraction_kpa,
    aoe_step_deg, poe_step_deg).  Command-line flags win over the file.
    """

    variant: str = "D2"
    layout: dict = field(default_factory=dict)
    mass_kg: float | None = None
    gravity_torque_90_nm: float | None = None
    gravity: bool = True
    dt_s: float = 0.01
    duration_s: float = 120.0
    kp_nm_per_deg: float = 0.1
    damping_nm_s_per_deg: float = 1.0
    tolerance_deg: float = 1.0
    cocontraction_kpa: float = 0.0
    aoe_step_deg: float = 5.0
    poe_step_deg: float = 5.0
    output_dir: str | None = None

    _FLOATS = ("mass_kg", "gravity_torque_90_nm", "dt_s", "duration_s", "kp_nm_per_deg",
               "damping_nm_s_per_deg", "tolerance_deg", "cocontraction_kpa",
               "aoe_step_deg", "poe_step_deg")

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        cp = configparser.ConfigParser()
        try:
            with open(path, encoding="utf-8") as fh:
                cp.read_file(fh)
        except OSError as exc:
            raise ParseError(f"cannot read config: {exc.strerror or exc}", path) from exc
        except configparser.Error as exc:
            raise ParseError(f"malformed config: {exc}", path) from exc
        cfg = cls()
        known = {"run", "layout", "arm", "simulation"}
        extra = set(cp.sections()) - known
        if extra:
            raise ParseError(f"unknown config sections {sorted(extra)}", path)
        for section in ("run", "arm", "simulation"):
            if section not in cp:
                continue
            for key, value in cp[section].items():
                if key == "variant":
                    cfg.variant = value.strip()
                elif key == "output_dir":
                    cfg.output_dir = value.strip()
                elif key == "gravity":
                    try:
                        cfg.gravity = cp[section].getboolean(key)
                    except ValueError:
                        raise ParseError(f"[{section}] gravity must be a boolean", path) from None
                elif key in cls._FLOATS:
                    try:
                        setattr(cfg, key, float(value))
                    except ValueError:
                        raise ParseError(f"[{section}] {key}: {value!r} is not a number",
                                         path) from None
                else:
                    raise ParseError(f"[{section}] unknown key {key!r}", path)
        if "layout" in cp:
            for key, value in cp["layout"].items():
                if key not in ("elevation", "depression", "steer_anterior", "steer_posterior"):
                    raise ParseError(f"[layout] unknown placement {key!r}", path)
                cfg.layout[key] = value.strip()
        return cfg

    def validate(self):
        get_variant(self.variant)
        for v in self.layout.values():
            get_variant(v)
        for name in self._FLOATS:
            v = getattr(self, name)
            if v is not None and not math.isfinite(v):
                raise DomainError(f"{name} must be finite")
        if not (self.dt_s > 0 and self.duration_s > 0):
            raise DomainError("dt and duration must be positive")
        if not (self.aoe_step_deg > 0 and self.poe_step_deg > 0):
            raise DomainError("grid steps must be positive")
        return self

    def arm(self) -> ArmParams | None:
        if not self.gravity:
            return None
        if self.mass_kg is None and self.gravity_torque_90_nm is None:
            return ArmParams(gravity_torque_90_nm=18.06)
        return ArmParams(self.mass_kg if self.mass_kg is not None else 3.5,
                         self.gravity_torque_90_nm)

    def sleeve(self):
        return default_layout(self.variant, **self.layout)

    def reach(self) -> ReachConfig:
        return ReachConfig(dt_s=self.dt_s, duration_s=self.duration_s,
                           kp_nm_per_deg=self.kp_nm_per_deg,
                           damping_nm_s_per_deg=self.damping_nm_s_per_deg,
                           tolerance_deg=self.tolerance_deg,
                           cocontraction_kpa=self.cocontraction_kpa)


def _out_dir(args, cfg: RunConfig | None = None) -> Path:
    chosen = args.out or os.environ.get(OUT_DIR_ENV) or (cfg.output_dir if cfg else None) or "."
    path = Path(chosen)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_summary(path: Path, lines):
    path.write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")
    return path


def _emit(lines):
    for line in lines:
        print(line)


def _g(x, digits=6):
    return f"{x:.{digits}g}"


# -- commands -----------------------------------------------------------------------


def cmd_fit(args) -> int:
    rows = dataio.parse_characterization(args.input)
    if args.model == "eq1":
        report = fit_torque_angle([r.aa_angle_deg for r in rows], [r.torque_nm for r in rows])
        keys = "abcd"
    else:
        report = fit_torque_pressure([r.pressure_kpa for r in rows],
                                     [r.torque_nm for r in rows], fix_g_to_zero=args.fix_g)
        keys = ("f",) if args.fix_g else ("f", "g")
    out = _out_dir(args)
    stem = f"fit_{args.model}"
    table = [(k, dataio.fmt(report.parameters[k])) for k in keys]
    table += [("r_squared", dataio.fmt(report.r_squared)),
              ("residual_norm", dataio.fmt(report.residual_norm)),
              ("iterations", str(report.iterations)),
              ("converged", str(int(report.converged)))]
    dataio._write(out / f"{stem}.csv", ("parameter", "value"), table)
    model = "T = a*exp(b*A) + c*exp(d*A)" if args.model == "eq1" else \
        ("T = f*P" if args.fix_g else "T = f*P + g")
    lines = [f"model: {model}", f"samples: {len(rows)}"]
    lines += [f"{k} = {_g(report.parameters[k], 8)}" for k in keys]
    lines += [f"R^2 = {report.r_squared:.3f}", f"converged: {'yes' if report.converged else 'no'}"]
    _write_summary(out / f"{stem}.txt", lines)
    _emit(lines)
    return EXIT_OK


def cmd_predict(args) -> int:
    model = reference_model(get_variant(args.variant))
    torque = float(predict_torque(model, args.angle, args.pressure))
    print(f"{torque + 0.0:.3f}")
    return EXIT_OK


def cmd_step(args) -> int:
    variant = get_variant(args.variant)
    dyn = dynamics_for(variant)
    if args.level is not None:
        pressure = step_input(args.level, args.duration, args.dt)
        low = 0.0
    else:
        period, low, high = args.square
        pressure = square_wave(period, low, high, args.duration, args.dt)
    trace = simulate_first_order(dyn, pressure, y0=dyn.steady_angle_fn(low))
    out = _out_dir(args)
    stem = f"step_{variant.name}"
    dataio.write_waveform(trace.times, trace.values, out / f"{stem}.csv")
    lines = [f"variant: {variant.name}"]
    for label, direction in (("rise_in", "inflate"), ("rise_out", "deflate")):
        try:
            lines.append(f"{label}_s = {rise_time(trace, direction):.3f}")
        except RiseTimeNotFound:
            lines.append(f"{label}_s = not found")
    _write_summary(out / f"{stem}.txt", lines)
    _emit(lines)
    return EXIT_OK


def _pose(text):
    try:
        aoe, poe = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected AOE,POE in degrees, got {text!r}") from None
    return ShoulderPose(aoe, poe)


def _config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    for name in ("variant", "mass_kg", "dt_s", "duration_s", "cocontraction_kpa",
                 "aoe_step_deg", "poe_step_deg"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    if getattr(args, "no_gravity", False):
        cfg.gravity = False
    return cfg.validate()


def cmd_motion(args) -> int:
    cfg = _config(args)
    result = simulate_reach(cfg.sleeve(), args.start, args.target, cfg.arm(), cfg.reach())
    out = _out_dir(args, cfg)
    dataio.write_trajectory(result, out / "trajectory.csv")
    final = result.final_pose
    lines = [f"success: {'yes' if result.success else 'no'}",
             f"time_s = {result.times[-1]:.2f}",
             f"final_aoe_deg = {final.aoe_deg:.3f}",
             f"final_poe_deg = {final.poe_deg:.3f}",
             f"pose_error_deg = {result.pose_error[-1]:.3f}"]
    _write_summary(out / "motion_summary.txt", lines)
    _emit(lines)
    return EXIT_OK if result.success else EXIT_NO_CONVERGENCE


def cmd_workspace(args) -> int:
    cfg = _config(args)
    ws = workspace_grid(cfg.sleeve(), cfg.arm(), cfg.aoe_step_deg, cfg.poe_step_deg,
                        cfg.cocontraction_kpa)
    out = _out_dir(args, cfg)
    dataio.write_workspace(ws, out / "workspace.csv")
    lines = [f"grid: {ws.aoe_deg.size} x {ws.poe_deg.size}",
             f"gravity: {'on' if cfg.gravity else 'off'}",
             f"reachable_pct = {100.0 * ws.reachable_share:.2f}"]
    _write_summary(out / "workspace_summary.txt", lines)
    _emit(lines)
    return EXIT_OK


def cmd_emg(args) -> int:
    trials, mvc = dataio.parse_trials(args.manifest)
    rows = emg_report(trials, mvc)
    out = _out_dir(args)
    dataio.write_report(rows, out / "emg_report.csv")
    lines = [f"{r.movement} {r.target_muscle} {r.relative_reduction_pct:.2f}%" for r in rows]
    _emit(lines)
    return EXIT_OK


# -- parser ---------------------------------------------------------------------------


def _positive(text):
    value = float(text)
    if not (math.isfinite(value) and value > 0):
        raise argparse.ArgumentTypeError(f"must be positive, got {text!r}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pneusleeve",
                     description="Soft shoulder sleeve models, simulations and EMG analysis.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    common = _Parser(add_help=False)
    common.add_argument("--out", help=f"output directory (else ${OUT_DIR_ENV}, else .)")

    p = sub.add_parser("fit", parents=[common], help="fit a torque model to a characterization CSV")
    p.add_argument("input")
    p.add_argument("--model", choices=("eq1", "eq2"), required=True,
                   help="eq1: torque vs angle, eq2: torque vs pressure")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--fix-g", dest="fix_g", action="store_true", default=True,
                   help="force the pressure line through the origin (default)")
    g.add_argument("--free-g", dest="fix_g", action="store_false",
                   help="fit an intercept too")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="torque of a reference actuator")
    p.add_argument("variant")
    p.add_argument("angle", type=float, help="A-A' angle, degrees")
    p.add_argument("pressure", type=float, help="pressure, kPa")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("step", parents=[common], help="simulate a pressure step or square wave")
    p.add_argument("variant")
    w = p.add_mutually_exclusive_group()
    w.add_argument("--square", nargs=3, type=float, metavar=("PERIOD", "LOW", "HIGH"),
                   default=(60.0, 0.0, 80.0))
    w.add_argument("--level", type=float, help="single step from 0 to LEVEL kPa")
    p.add_argument("--duration", type=_positive, default=120.0)
    p.add_argument("--dt", type=_positive, default=0.01)
    p.set_defaults(func=cmd_step)

    sim = _Parser(add_help=False, parents=[common])
    sim.add_argument("--config", help="INI run configuration")
    sim.add_argument("--variant")
    sim.add_argument("--mass", dest="mass_kg", type=_positive)
    sim.add_argument("--no-gravity", action="store_true")
    sim.add_argument("--cocontraction", dest="cocontraction_kpa", type=float)

    p = sub.add_parser("motion", parents=[sim], help="closed-loop reach simulation")
    p.add_argument("--start", type=_pose, default=ShoulderPose(0.0, 0.0))
    p.add_argument("--target", type=_pose, required=True)
    p.add_argument("--dt", dest="dt_s", type=_positive)
    p.add_argument("--duration", dest="duration_s", type=_positive)
    p.set_defaults(func=cmd_motion)

    p = sub.add_parser("workspace", parents=[sim], help="hold-feasibility map over the ROM")
    p.add_argument("--aoe-step", dest="aoe_step_deg", type=_positive)
    p.add_argument("--poe-step", dest="poe_step_deg", type=_positive)
    p.set_defaults(func=cmd_workspace)

    p = sub.add_parser("emg", parents=[common], help="EMG reduction report from a trial manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_emg)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FitFailure, SegmentationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    except (ParseError, DomainError, ConfigurationError, IncompleteDataError,
            OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SleeveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
