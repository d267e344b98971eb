"""CSV schemas, parsers and writers.

Every file is UTF-8, comma separated, with exactly one header line whose
column names carry their units.  Floats are written with ``repr`` so a
parse/serialize round trip is bit-exact.  Errors carry 1-based line numbers
counted from the header.
"""

from __future__ import annotations

import configparser
import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (ConfigurationError, MissingChannelError, ParseError,
                     RateMismatchError, ValidationError)
from .models import AA_RANGE_DEG, BB_RANGE_DEG, MAX_PRESSURE_KPA
from .signals import (EMG_RATE_HZ, IMU_RATE_HZ, MUSCLES, EmgTrace, ImuTrace,
                      MvcTable, ReportRow, TrialSet)

CHARACTERIZATION_HEADER = ("aa_angle_deg", "bb_angle_deg", "pressure_kpa", "torque_nm")
RAW_PLATFORM_HEADER = ("aa_angle_deg", "bb_angle_deg", "pressure_kpa",
                       "f1_n", "f2_n", "f3_n", "f4_n")
LEVER_HEADER = ("cell", "axis", "lever_m", "sign")
IMU_HEADER = ("time_s", "elevation_deg")
MVC_HEADER = ("muscle", "mvc_v")
REPORT_HEADER = ("movement", "target_muscle", "relative_reduction_pct")
WAVEFORM_HEADER = ("time_s", "value")
TRAJECTORY_HEADER = ("time_s", "aoe_deg", "poe_deg", "p1_kpa", "p2_kpa", "p3_kpa", "p4_kpa")
WORKSPACE_HEADER = ("aoe_deg", "poe_deg", "feasible", "fraction")

RATE_TOLERANCE = 0.01


def fmt(x) -> str:
    """Shortest text that parses back to the same float."""
    return repr(float(x))


# -- low-level reading --------------------------------------------------------------


def _read_rows(path, header: Sequence[str] | None = None, *, prefix: Sequence[str] = ()):
    """Yield ``(line_no, fields)`` after checking the header.

    With ``header`` the header must match exactly; with ``prefix`` only its
    leading columns are fixed.  The header fields are returned first as
    line 1.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8-sig")
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc.strerror or exc}", path) from exc
    except UnicodeDecodeError as exc:
        raise ParseError("file is not valid UTF-8", path) from exc
    reader = csv.reader(io.StringIO(text))
    try:
        got = next(reader)
    except StopIteration:
        raise ParseError("missing header line", path, 1) from None
    got = [h.strip() for h in got]
    if header is not None and tuple(got) != tuple(header):
        raise ParseError(f"expected header {','.join(header)!r}, got {','.join(got)!r}",
                         path, 1)
    if prefix and tuple(got[:len(prefix)]) != tuple(prefix):
        raise ParseError(f"header must start with {','.join(prefix)!r}", path, 1)
    rows = [(1, got)]
    for fields in reader:
        line = reader.line_num
        if not fields or all(not f.strip() for f in fields):
            continue
        if len(fields) != len(got):
            raise ParseError(f"expected {len(got)} fields, got {len(fields)}", path, line)
        rows.append((line, [f.strip() for f in fields]))
    return rows


def _float(text, path, line, column):
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"column {column!r}: {text!r} is not a number", path, line) from None
    if not math.isfinite(value):
        raise ValidationError(f"column {column!r}: value must be finite", path, line)
    return value


def _in_range(value, bounds, path, line, column):
    lo, hi = bounds
    if not lo <= value <= hi:
        raise ValidationError(f"column {column!r}: {value!r} outside [{lo:g}, {hi:g}]",
                              path, line)
    return value


def _write(path, header, rows: Iterable[Sequence[str]]):
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


# -- characterization -----------------------------------------------------------


@dataclass(frozen=True)
class CharacterizationRow:
    aa_angle_deg: float
    bb_angle_deg: float
    pressure_kpa: float
    torque_nm: float


def _platform_fields(values, path, line):
    aa = _in_range(values[0], AA_RANGE_DEG, path, line, "aa_angle_deg")
    bb = _in_range(values[1], BB_RANGE_DEG, path, line, "bb_angle_deg")
    p = _in_range(values[2], (0.0, MAX_PRESSURE_KPA), path, line, "pressure_kpa")
    return aa, bb, p


def parse_characterization(path) -> list[CharacterizationRow]:
    rows = _read_rows(path, CHARACTERIZATION_HEADER)
    out = []
    for line, fields in rows[1:]:
        vals = [_float(f, path, line, c) for f, c in zip(fields, CHARACTERIZATION_HEADER)]
        out.append(CharacterizationRow(*_platform_fields(vals, path, line), vals[3]))
    return out


def write_characterization(rows: Iterable[CharacterizationRow], path):
    return _write(path, CHARACTERIZATION_HEADER,
                  ((fmt(r.aa_angle_deg), fmt(r.bb_angle_deg), fmt(r.pressure_kpa),
                    fmt(r.torque_nm)) for r in rows))


@dataclass(frozen=True)
class LeverCell:
    cell: int
    axis: str
    lever_m: float
    sign: int


@dataclass(frozen=True)
class LeverGeometry:
    """Lever arm, axis and sign of each of the four platform load cells."""

    cells: tuple[LeverCell, ...]

    def __post_init__(self):
        cells = tuple(sorted(self.cells, key=lambda c: c.cell))
        if [c.cell for c in cells] != [1, 2, 3, 4]:
            raise ConfigurationError("lever geometry needs exactly cells 1-4")
        for c in cells:
            if c.axis not in ("AA", "BB"):
                raise ConfigurationError(f"cell {c.cell}: axis must be AA or BB")
            if not (math.isfinite(c.lever_m) and c.lever_m > 0):
                raise ConfigurationError(f"cell {c.cell}: lever arm must be positive")
            if c.sign not in (1, -1):
                raise ConfigurationError(f"cell {c.cell}: sign must be +1 or -1")
        for axis in ("AA", "BB"):
            if sum(c.axis == axis for c in cells) != 2:
                raise ConfigurationError(f"lever geometry needs two {axis} cells")
        object.__setattr__(self, "cells", cells)


def parse_lever_geometry(path) -> LeverGeometry:
    cells = []
    for line, (cell, axis, lever, sign) in _read_rows(path, LEVER_HEADER)[1:]:
        try:
            cell_i, sign_i = int(cell), int(sign)
        except ValueError:
            raise ParseError("cell and sign must be integers", path, line) from None
        cells.append(LeverCell(cell_i, axis.upper(), _float(lever, path, line, "lever_m"),
                               sign_i))
    return LeverGeometry(tuple(cells))


def loadcell_to_torque(forces: Sequence[float], geom: LeverGeometry) -> tuple[float, float]:
    """``(aa_torque_nm, bb_torque_nm)`` from the four load-cell forces."""
    f = np.asarray(forces, dtype=float)
    if f.shape != (len(geom.cells),):
        raise ConfigurationError(
            f"got {f.size} forces for a {len(geom.cells)}-cell geometry")
    if not np.all(np.isfinite(f)):
        raise ConfigurationError("load-cell forces must be finite")
    out = {"AA": 0.0, "BB": 0.0}
    for force, cell in zip(f, geom.cells):
        out[cell.axis] += cell.sign * force * cell.lever_m
    return out["AA"], out["BB"]


def parse_raw_platform(path, geom: LeverGeometry) -> list[CharacterizationRow]:
    """Raw load-cell log converted to A-A' torque rows."""
    out = []
    for line, fields in _read_rows(path, RAW_PLATFORM_HEADER)[1:]:
        vals = [_float(f, path, line, c) for f, c in zip(fields, RAW_PLATFORM_HEADER)]
        aa, bb, p = _platform_fields(vals, path, line)
        out.append(CharacterizationRow(aa, bb, p, loadcell_to_torque(vals[3:], geom)[0]))
    return out


# -- EMG / IMU / MVC --------------------------------------------------------------


def _check_rate(times, declared_hz, path):
    if times.size < 2:
        raise ValidationError("need at least two samples to check the sample rate", path)
    dt = np.diff(times)
    if np.any(dt <= 0):
        line = int(np.flatnonzero(dt <= 0)[0]) + 3
        raise ValidationError("time column must increase strictly", path, line)
    measured = (times.size - 1) / (times[-1] - times[0])
    if abs(measured - declared_hz) > RATE_TOLERANCE * declared_hz:
        raise RateMismatchError(
            f"sampled at {measured:.6g} Hz, declared {declared_hz:g} Hz", path)
    step = 1.0 / declared_hz
    bad = np.flatnonzero(np.abs(dt - step) > RATE_TOLERANCE * step)
    if bad.size:
        raise RateMismatchError("irregular sample spacing", path, int(bad[0]) + 3)


def _numeric_table(path, header=None, prefix=()):
    rows = _read_rows(path, header, prefix=prefix)
    names = rows[0][1]
    data = np.array([[_float(f, path, line, c) for f, c in zip(fields, names)]
                     for line, fields in rows[1:]], dtype=float).reshape(-1, len(names))
    return names, data


def parse_emg(path, sample_rate_hz: float = EMG_RATE_HZ,
              muscles: Sequence[str] | None = None) -> EmgTrace:
    names, data = _numeric_table(path, prefix=("time_s",))
    channels = names[1:]
    unknown = [m for m in channels if m not in MUSCLES]
    if unknown:
        raise ParseError(f"unknown muscle columns {unknown}", path, 1)
    if len(set(channels)) != len(channels):
        raise ParseError("duplicate muscle columns", path, 1)
    if muscles is not None:
        missing = [m for m in muscles if m not in channels]
        if missing:
            raise MissingChannelError(f"EMG lacks channels {missing}", path, 1)
    _check_rate(data[:, 0], sample_rate_hz, path)
    return EmgTrace(sample_rate_hz, {m: data[:, i + 1].copy() for i, m in enumerate(channels)},
                    float(data[0, 0]))


def write_emg(trace: EmgTrace, path):
    names = list(trace.channels)
    t = trace.t0_s + np.arange(len(trace)) / trace.sample_rate_hz
    cols = [trace.channels[m] for m in names]
    return _write(path, ("time_s", *names),
                  ([fmt(t[i])] + [fmt(c[i]) for c in cols] for i in range(t.size)))


def parse_imu(path, sample_rate_hz: float = IMU_RATE_HZ) -> ImuTrace:
    _, data = _numeric_table(path, IMU_HEADER)
    _check_rate(data[:, 0], sample_rate_hz, path)
    return ImuTrace(sample_rate_hz, data[:, 1].copy(), float(data[0, 0]))


def write_imu(trace: ImuTrace, path):
    t = trace.t0_s + np.arange(len(trace)) / trace.sample_rate_hz
    return _write(path, IMU_HEADER,
                  ((fmt(a), fmt(b)) for a, b in zip(t, trace.elevation_deg)))


def parse_mvc(path) -> MvcTable:
    values = {}
    for line, (muscle, v) in _read_rows(path, MVC_HEADER)[1:]:
        if muscle not in MUSCLES:
            raise ValidationError(f"unknown muscle {muscle!r}", path, line)
        if muscle in values:
            raise ValidationError(f"duplicate entry for {muscle!r}", path, line)
        value = _float(v, path, line, "mvc_v")
        if value <= 0:
            raise ValidationError(f"MVC for {muscle!r} must be positive", path, line)
        values[muscle] = value
    return MvcTable(values)


def write_mvc(table: MvcTable, path):
    return _write(path, MVC_HEADER, ((m, fmt(v)) for m, v in table.values.items()))


def parse_trials(manifest_path) -> tuple[list[TrialSet], MvcTable]:
    """Trial sets and MVC table described by an INI manifest.

    ``[data]`` holds ``mvc`` (file), ``muscles`` (comma list, required
    columns), optional ``emg_rate_hz``, ``imu_rate_hz`` and
    ``repetitions``.  Each ``[trial <movement> <condition>]`` section lists
    matching ``emg`` and ``imu`` files, one pair per repetition.  Relative
    paths resolve against the manifest's directory.
    """
    manifest_path = Path(manifest_path)
    cfg = configparser.ConfigParser()
    try:
        with manifest_path.open(encoding="utf-8") as fh:
            cfg.read_file(fh)
    except OSError as exc:
        raise ParseError(f"cannot read manifest: {exc.strerror or exc}", manifest_path) from exc
    except configparser.Error as exc:
        raise ParseError(f"malformed manifest: {exc}", manifest_path) from exc
    if "data" not in cfg:
        raise ParseError("manifest lacks a [data] section", manifest_path)
    data = cfg["data"]
    base = manifest_path.parent
    files = lambda text: [base / p.strip() for p in text.split(",") if p.strip()]
    try:
        emg_rate = data.getfloat("emg_rate_hz", EMG_RATE_HZ)
        imu_rate = data.getfloat("imu_rate_hz", IMU_RATE_HZ)
        reps = data.getint("repetitions", 3)
    except ValueError as exc:
        raise ParseError(f"[data]: {exc}", manifest_path) from None
    if "mvc" not in data:
        raise ParseError("[data] needs an 'mvc' file", manifest_path)
    mvc = parse_mvc(base / data["mvc"])
    muscles = [m.strip() for m in data.get("muscles", "").split(",") if m.strip()]
    for m in muscles:
        if m not in MUSCLES:
            raise ParseError(f"unknown muscle {m!r} in manifest", manifest_path)
        mvc[m]  # ConfigurationError when absent
    trials = []
    for section in cfg.sections():
        parts = section.split()
        if parts[0] != "trial":
            continue
        if len(parts) != 3:
            raise ParseError(f"section [{section}] must be [trial <movement> <condition>]",
                             manifest_path)
        emg_files = files(cfg[section].get("emg", ""))
        imu_files = files(cfg[section].get("imu", ""))
        if not emg_files or len(emg_files) != len(imu_files):
            raise ParseError(f"[{section}] needs matching emg and imu file lists",
                             manifest_path)
        pairs = [(parse_emg(e, emg_rate, muscles), parse_imu(i, imu_rate))
                 for e, i in zip(emg_files, imu_files)]
        trials.append(TrialSet(parts[1], parts[2], pairs, reps))
    return trials, mvc


# -- results --------------------------------------------------------------------


def write_report(rows: Iterable[ReportRow], path, decimals: int = 2):
    return _write(path, REPORT_HEADER,
                  ((r.movement, r.target_muscle, f"{r.relative_reduction_pct:.{decimals}f}")
                   for r in rows))


def parse_report(path) -> list[ReportRow]:
    return [ReportRow(m, t, _float(v, path, line, "relative_reduction_pct"))
            for line, (m, t, v) in _read_rows(path, REPORT_HEADER)[1:]]


def write_waveform(times, values, path):
    return _write(path, WAVEFORM_HEADER,
                  ((fmt(t), fmt(v)) for t, v in zip(times, values)))


def parse_waveform(path) -> tuple[np.ndarray, np.ndarray]:
    _, data = _numeric_table(path, WAVEFORM_HEADER)
    return data[:, 0].copy(), data[:, 1].copy()


def write_trajectory(result, path):
    return _write(path, TRAJECTORY_HEADER,
                  ([fmt(t), fmt(a), fmt(p)] + [fmt(x) for x in ps]
                   for t, a, p, ps in zip(result.times, result.aoe, result.poe,
                                          result.pressures)))


def write_workspace(ws, path):
    return _write(path, WORKSPACE_HEADER,
                  ((fmt(a), fmt(p), "1" if ok else "0", fmt(frac))
                   for a, p, ok, frac in ws.rows()))
