"""Surface EMG and IMU processing for assisted/unassisted movement trials.

Raw EMG is rectified, low-pass filtered, normalized to each muscle's MVC and
turned into a trailing-window RMS envelope.  The IMU elevation angle splits
every repetition into a loading (raising) and an unloading (lowering) phase.
Phase envelopes are time-normalized, averaged over repetitions and reduced to
a single RMS value per condition, and the powered condition is compared with
the unpowered one as a relative reduction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import signal as sps

from .errors import (ConfigurationError, DomainError, IncompleteDataError,
                     SegmentationError, UndefinedFractionError)

EMG_RATE_HZ = 2000.0
IMU_RATE_HZ = 100.0
RMS_WINDOW_SAMPLES = 500
RESAMPLE_POINTS = 1000

MUSCLES = ("anterior_deltoid", "lateral_deltoid", "posterior_deltoid",
           "pectoralis_major", "infraspinatus")
MOVEMENTS = ("abduction", "adduction", "horizontal_flexion",
             "horizontal_extension", "forward_flexion", "forward_extension")
CONDITIONS = ("unpowered", "powered")

# Target muscle and analysed phase per movement, in report order.
TARGETS = {
    "abduction": ("lateral_deltoid", "loading"),
    "adduction": ("lateral_deltoid", "unloading"),
    "horizontal_flexion": ("pectoralis_major", "loading"),
    "horizontal_extension": ("posterior_deltoid", "unloading"),
    "forward_flexion": ("anterior_deltoid", "loading"),
    "forward_extension": ("posterior_deltoid", "unloading"),
}


def _uniform_series(values, what):
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise DomainError(f"{what} must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{what} contains non-finite samples")
    return arr


@dataclass(frozen=True)
class EmgTrace:
    """Multi-channel EMG in volts (or MVC fractions once normalized)."""

    sample_rate_hz: float
    channels: dict[str, np.ndarray]
    t0_s: float = 0.0

    def __post_init__(self):
        if not self.sample_rate_hz > 0:
            raise DomainError("sample rate must be positive")
        chans = {}
        lengths = set()
        for name, values in self.channels.items():
            if name not in MUSCLES:
                raise DomainError(f"unknown muscle label {name!r}")
            chans[name] = _uniform_series(values, f"channel {name!r}")
            lengths.add(chans[name].size)
        if len(lengths) > 1:
            raise DomainError("EMG channels differ in length")
        object.__setattr__(self, "channels", chans)

    def __len__(self):
        return next(iter(self.channels.values())).size if self.channels else 0

    def map(self, fn) -> "EmgTrace":
        return EmgTrace(self.sample_rate_hz,
                        {k: fn(k, v) for k, v in self.channels.items()}, self.t0_s)


@dataclass(frozen=True)
class ImuTrace:
    """Elevation of the upper arm relative to the chest, degrees."""

    sample_rate_hz: float
    elevation_deg: np.ndarray
    t0_s: float = 0.0

    def __post_init__(self):
        if not self.sample_rate_hz > 0:
            raise DomainError("sample rate must be positive")
        object.__setattr__(self, "elevation_deg",
                           _uniform_series(self.elevation_deg, "elevation"))

    def __len__(self):
        return self.elevation_deg.size


@dataclass(frozen=True)
class MvcTable:
    values: dict[str, float]

    def __post_init__(self):
        for name, v in self.values.items():
            if not (math.isfinite(v) and v > 0):
                raise ConfigurationError(f"MVC for {name!r} must be positive, got {v!r}")

    def __getitem__(self, muscle):
        try:
            return self.values[muscle]
        except KeyError:
            raise ConfigurationError(f"no MVC entry for {muscle!r}") from None


@dataclass(frozen=True)
class TrialSet:
    movement: str
    condition: str
    repetitions: list[tuple[EmgTrace, ImuTrace]] = field(default_factory=list)
    expected_repetitions: int | None = 3

    def __post_init__(self):
        if self.movement not in MOVEMENTS:
            raise DomainError(f"unknown movement {self.movement!r}")
        if self.condition not in CONDITIONS:
            raise DomainError(f"unknown condition {self.condition!r}")


def rectify(trace: EmgTrace) -> EmgTrace:
    return trace.map(lambda _, v: np.abs(v))


def design_lowpass(sample_rate_hz: float = EMG_RATE_HZ, passband_hz: float = 20.0,
                   stopband_hz: float = 40.0, attenuation_db: float = 80.0,
                   ripple_db: float = 1.0):
    """Chebyshev type II low-pass as second-order sections.

    The order is the smallest that keeps the passband loss within
    ``ripple_db`` up to ``passband_hz`` while attenuating by at least
    ``attenuation_db`` from ``stopband_hz`` on; one extra dB of stopband
    margin is designed in.
    """
    if not (0 < passband_hz < stopband_hz):
        raise DomainError("need 0 < passband edge < stopband edge")
    if sample_rate_hz < 2.0 * stopband_hz:
        raise DomainError(
            f"sample rate {sample_rate_hz:g} Hz is below twice the stopband edge")
    rs = attenuation_db + 1.0
    order, _ = sps.cheb2ord(passband_hz, stopband_hz, ripple_db, rs, fs=sample_rate_hz)
    return sps.cheby2(order, rs, stopband_hz, btype="low", output="sos",
                      fs=sample_rate_hz)


_SOS_CACHE: dict[float, np.ndarray] = {}


def lowpass(trace: EmgTrace) -> EmgTrace:
    """Causal single-pass filtering of every channel."""
    sos = _SOS_CACHE.get(trace.sample_rate_hz)
    if sos is None:
        sos = _SOS_CACHE.setdefault(trace.sample_rate_hz,
                                    design_lowpass(trace.sample_rate_hz))
    return trace.map(lambda _, v: sps.sosfilt(sos, v))


def rms_envelope(series, window_samples: int = RMS_WINDOW_SAMPLES) -> np.ndarray:
    """Trailing-window RMS; the first ``window - 1`` outputs use fewer samples."""
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        raise DomainError("cannot take the envelope of an empty series")
    w = int(window_samples)
    if w < 1:
        raise DomainError("window must be at least one sample")
    padded = np.concatenate([np.zeros(w - 1), x])
    windows = sliding_window_view(padded, w)
    counts = np.minimum(np.arange(1, x.size + 1), w)
    env = np.sqrt(np.sum(windows * windows, axis=1) / counts)
    # guard the max-abs bound against summation round-off
    return np.minimum(env, np.max(np.abs(windows), axis=1))


def normalize_mvc(trace: EmgTrace, mvc: MvcTable) -> EmgTrace:
    return trace.map(lambda name, v: v / mvc[name])


@dataclass(frozen=True)
class Segment:
    """Half-open time interval ``[start_s, end_s)``."""

    start_s: float
    end_s: float

    def indices(self, sample_rate_hz: float, t0_s: float = 0.0) -> slice:
        i0 = int(round((self.start_s - t0_s) * sample_rate_hz))
        i1 = int(round((self.end_s - t0_s) * sample_rate_hz))
        return slice(max(i0, 0), max(i1, 0))

    @property
    def duration_s(self):
        return self.end_s - self.start_s


@dataclass(frozen=True)
class Repetition:
    loading: Segment
    unloading: Segment

    def phase(self, name: str) -> Segment:
        return self.loading if name == "loading" else self.unloading


def _runs(mask):
    padded = np.concatenate([[False], mask, [False]])
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    return list(zip(edges[::2], edges[1::2]))


def segment_motion(imu: ImuTrace, emg: EmgTrace | None = None, *,
                   threshold_deg_s: float = 5.0, smooth_s: float = 0.1,
                   min_duration_s: float = 0.2) -> list[Repetition]:
    """Loading/unloading phases of every raise-lower cycle.

    The elevation is smoothed with a centred moving average of ``smooth_s``
    and differentiated; runs faster than ``+threshold`` are loading, runs
    faster than ``-threshold`` unloading.  Runs shorter than
    ``min_duration_s`` are ignored and each loading run pairs with the next
    unloading run.  Segments are returned in seconds so they index the EMG
    (or any other stream sharing the clock) directly.
    """
    fs = imu.sample_rate_hz
    y = imu.elevation_deg
    if y.size < 3:
        raise SegmentationError("IMU trace too short to segment")
    k = max(1, int(round(smooth_s * fs)))
    if k > 1:
        kernel = np.ones(k) / k
        ypad = np.pad(y, (k // 2, k - 1 - k // 2), mode="edge")
        y = np.convolve(ypad, kernel, mode="valid")
    rate = np.gradient(y, 1.0 / fs)
    min_len = max(1, int(round(min_duration_s * fs)))
    up = [r for r in _runs(rate > threshold_deg_s) if r[1] - r[0] >= min_len]
    down = [r for r in _runs(rate < -threshold_deg_s) if r[1] - r[0] >= min_len]
    to_s = lambda i: float(imu.t0_s + i / fs)
    reps = []
    j = 0
    for u0, u1 in up:
        while j < len(down) and down[j][0] < u1:
            j += 1
        if j == len(down):
            break
        d0, d1 = down[j]
        reps.append(Repetition(Segment(to_s(u0), to_s(u1)), Segment(to_s(d0), to_s(d1))))
        j += 1
    if not reps:
        raise SegmentationError("no raise-lower cycle exceeds the motion threshold")
    if emg is not None:
        end_s = emg.t0_s + len(emg) / emg.sample_rate_hz
        if reps[-1].unloading.end_s > end_s + 1.0 / fs:
            raise SegmentationError("EMG recording ends before the last IMU cycle")
    return reps


def relative_reduction(unpowered_rms: float, powered_rms: float) -> float:
    """Percent drop from unpowered to powered; negative for an increase."""
    if not unpowered_rms > 0:
        raise UndefinedFractionError("unpowered baseline must be positive")
    return 100.0 * (unpowered_rms - powered_rms) / unpowered_rms


def _resample(x, n):
    if x.size == 0:
        raise SegmentationError("empty motion segment")
    if x.size == 1:
        return np.full(n, x[0])
    return np.interp(np.linspace(0.0, 1.0, n), np.linspace(0.0, 1.0, x.size), x)


@dataclass(frozen=True)
class ReportRow:
    movement: str
    target_muscle: str
    relative_reduction_pct: float


StageHook = Callable[[str], None]


def condition_rms(trials: TrialSet, mvc: MvcTable, *,
                  window_samples: int = RMS_WINDOW_SAMPLES,
                  resample_points: int = RESAMPLE_POINTS,
                  on_stage: StageHook | None = None, **segment_kw) -> float:
    """Averaged phase-envelope RMS of one movement under one condition."""
    stage = on_stage or (lambda _name: None)
    muscle, phase = TARGETS[trials.movement]
    curves = []
    for emg, imu in trials.repetitions:
        if muscle not in emg.channels:
            raise ConfigurationError(
                f"{trials.movement}: EMG lacks target muscle {muscle!r}")
        stage("rectify")
        x = rectify(emg)
        stage("lowpass")
        x = lowpass(x)
        stage("normalize")
        x = normalize_mvc(x, mvc)
        stage("envelope")
        env = rms_envelope(x.channels[muscle], window_samples)
        stage("segment")
        for rep in segment_motion(imu, emg, **segment_kw):
            sl = rep.phase(phase).indices(emg.sample_rate_hz, emg.t0_s)
            curves.append(_resample(env[sl], resample_points))
    expected = trials.expected_repetitions
    if expected is not None and len(curves) != expected:
        raise SegmentationError(
            f"{trials.movement}/{trials.condition}: found {len(curves)} "
            f"repetitions, expected {expected}")
    if not curves:
        raise IncompleteDataError(f"{trials.movement}/{trials.condition} has no data")
    stage("average")
    mean_curve = np.mean(curves, axis=0)
    stage("rms")
    return float(np.sqrt(np.mean(mean_curve * mean_curve)))


def emg_report(trials: Iterable[TrialSet], mvc: MvcTable, *,
               on_stage: StageHook | None = None, **kw) -> list[ReportRow]:
    """Relative EMG reduction per movement, in the standard row order."""
    by_key = {}
    for t in trials:
        key = (t.movement, t.condition)
        if key in by_key:
            raise DomainError(f"duplicate trial set for {key}")
        by_key[key] = t
    rows = []
    for movement in MOVEMENTS:
        present = [c for c in CONDITIONS if (movement, c) in by_key]
        if not present:
            continue
        if len(present) < 2:
            missing = next(c for c in CONDITIONS if c not in present)
            raise IncompleteDataError(f"{movement}: no {missing} trials to compare")
        rms = {c: condition_rms(by_key[(movement, c)], mvc, on_stage=on_stage, **kw)
               for c in CONDITIONS}
        if on_stage:
            on_stage("reduction")
        rows.append(ReportRow(movement, TARGETS[movement][0],
                              relative_reduction(rms["unpowered"], rms["powered"])))
    if not rows:
        raise IncompleteDataError("no trials given")
    return rows
