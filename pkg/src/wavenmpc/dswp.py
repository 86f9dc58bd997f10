"""Fixed-point deterministic sea wave prediction.

A single probe at x = 0 records the free-surface elevation. The record is
decomposed by DFT into cosine components, which are then propagated to the
vehicle with the deep-water phase filter ``k = omega**2 / g`` and fed to the
load model to preview the wave disturbance over the controller horizon.
"""

from __future__ import annotations

import csv
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .vehicle import VehicleParams, body_wave_load, sample_kinematics
from .wave_field import G, TWO_PI, kinematics_terms

log = logging.getLogger(__name__)


class NoPredictableComponentsError(ValueError):
    pass


class EmptyPredictionHorizonError(ValueError):
    pass


class NonUniformSampleError(ValueError):
    pass


@dataclass(frozen=True)
class ElevationRecord:
    """Uniformly sampled elevation at the probe; ``t_start`` is the first sample time."""

    samples: np.ndarray
    dt: float
    t_start: float = 0.0

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 1 or s.size < 1:
            raise ValueError("samples must be a non-empty 1-D series")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "samples", s)

    @property
    def n_samples(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.n_samples * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.n_samples)

    @property
    def t_end(self) -> float:
        """Time of the last sample."""
        return self.t_start + self.dt * (self.n_samples - 1)


class RecordBuffer:
    """Ring buffer holding the most recent ``duration`` seconds of samples."""

    def __init__(self, duration: float, dt: float):
        if not (duration > 0 and dt > 0):
            raise ValueError("duration and dt must be positive")
        capacity = round(duration / dt)
        if capacity < 1 or abs(capacity * dt - duration) > 1e-9 * max(1.0, duration):
            raise ValueError("duration must be a positive integer multiple of dt")
        self.dt = dt
        self.capacity = capacity
        self._samples: deque[float] = deque(maxlen=capacity)
        self._t_last: Optional[float] = None

    def __len__(self) -> int:
        return len(self._samples)

    @property
    def full(self) -> bool:
        return len(self._samples) == self.capacity

    @property
    def duration(self) -> float:
        return len(self._samples) * self.dt

    def record_sample(self, zeta: float, t: float) -> "RecordBuffer":
        if self._t_last is not None:
            gap = t - self._t_last
            if abs(gap - self.dt) > 1e-6 * self.dt:
                raise NonUniformSampleError(
                    f"sample at t={t!r} is {gap!r} s after the previous one, expected {self.dt!r}")
        self._samples.append(float(zeta))
        self._t_last = float(t)
        return self

    def snapshot(self) -> ElevationRecord:
        if not self._samples:
            raise ValueError("buffer is empty")
        t_start = self._t_last - self.dt * (len(self._samples) - 1)
        return ElevationRecord(np.fromiter(self._samples, float, len(self._samples)),
                               self.dt, t_start)


@dataclass(frozen=True)
class ReconstructedSpectrum:
    """Cosine components of a record, phases referenced to ``t_ref``.

    Elevation at (x, t) is ``sum A cos(k x - omega (t - t_ref) + eps)``.
    """

    amplitude: np.ndarray
    phase: np.ndarray
    omega: np.ndarray
    wavenumber: np.ndarray
    t_ref: float
    record_duration: float
    amp_floor: float = 0.0
    band: tuple[float, float] = (0.0, math.inf)
    g: float = G

    def __len__(self) -> int:
        return int(self.amplitude.size)

    @property
    def empty(self) -> bool:
        return self.amplitude.size == 0

    def absolute_phase(self) -> np.ndarray:
        """Phases shifted so the components read ``cos(k x - omega t + eps)``."""
        return np.mod(self.phase + self.omega * self.t_ref, TWO_PI)


def estimate_spectrum(record: ElevationRecord, amp_floor: float = 0.0,
                      band: Optional[Sequence[float]] = None, *,
                      relative_floor: Optional[float] = None, g: float = G,
                      allow_empty: bool = False) -> ReconstructedSpectrum:
    """DFT decomposition of ``record`` into bounded cosine components.

    One-sided amplitudes are ``2|F_n|/J`` (``|F_n|/J`` for the mean and the
    Nyquist bin); ``eps_n = -angle(F_n)`` turns the DFT's ``exp(+i omega t)``
    convention into the ``cos(k x - omega t + eps)`` form. Bins outside
    ``band`` or with amplitude below the floor are dropped. ``relative_floor``
    sets the floor as a fraction of the largest in-band amplitude and takes
    precedence over ``amp_floor``.
    """
    J = record.n_samples
    if J < 2:
        raise ValueError("need at least two samples")
    F = np.fft.rfft(record.samples)
    n = np.arange(F.size)
    amp = 2.0 * np.abs(F) / J
    amp[0] *= 0.5
    if J % 2 == 0:
        amp[-1] *= 0.5
    omega = TWO_PI * n / (J * record.dt)
    phase = np.mod(-np.angle(F), TWO_PI)

    lo, hi = (0.0, math.inf) if band is None else (float(band[0]), float(band[1]))
    if band is not None and (lo < 0 or hi <= lo or lo > math.pi / record.dt):
        raise ValueError(f"band {band} must lie within (0, pi/dt]")
    in_band = (omega >= lo) & (omega <= hi)
    floor = amp_floor
    if relative_floor is not None:
        peak = amp[in_band].max() if np.any(in_band) else 0.0
        floor = relative_floor * peak
    keep = in_band & (amp >= floor) & (amp > 0.0)
    if not np.any(keep) and not allow_empty:
        raise NoPredictableComponentsError("no predictable components in the record")
    w = omega[keep]
    return ReconstructedSpectrum(
        amplitude=amp[keep], phase=phase[keep], omega=w, wavenumber=w * w / g,
        t_ref=record.t_start, record_duration=record.duration,
        amp_floor=float(floor), band=(lo, hi), g=g)


@dataclass(frozen=True)
class PredictableRegion:
    """Validity window (t_s, t_f), in seconds after the start of the record."""

    t_s: float
    t_f: float
    x_p: float
    t_ref: float = 0.0

    @property
    def duration(self) -> float:
        return self.t_f - self.t_s

    @property
    def absolute(self) -> tuple[float, float]:
        return self.t_ref + self.t_s, self.t_ref + self.t_f

    def contains(self, t) -> np.ndarray:
        a, b = self.absolute
        t = np.asarray(t, dtype=float)
        eps = 1e-9 * max(1.0, abs(b))
        return (t >= a - eps) & (t <= b + eps)


def deep_water_celerity(omega, g: float = G):
    return g / np.asarray(omega, dtype=float)


def predictable_region(spec: ReconstructedSpectrum, x_p: float, t_m: Optional[float] = None,
                       depth: Optional[float] = None) -> PredictableRegion:
    """Window over which every retained component has crossed from probe to ``x_p``.

    ``t_s = x_p / c_slow`` with c_slow the celerity of the highest retained
    frequency, ``t_f = x_p / c_fast + T_M`` with c_fast that of the lowest.
    Celerity is the deep-water ``g / omega`` matching the phase filter, so
    ``depth`` is accepted for interface symmetry only.
    """
    w = spec.omega[spec.omega > 0]
    if w.size == 0:
        raise NoPredictableComponentsError("spectrum has no propagating components")
    t_m = spec.record_duration if t_m is None else t_m
    c_slow = float(deep_water_celerity(w.max(), spec.g))
    c_fast = float(deep_water_celerity(w.min(), spec.g))
    t_s = x_p / c_slow
    t_f = x_p / c_fast + t_m
    if t_s >= t_f:
        raise EmptyPredictionHorizonError(
            f"prediction horizon empty: t_s={t_s:.3f} >= t_f={t_f:.3f}; narrow the band")
    return PredictableRegion(t_s, t_f, x_p, spec.t_ref)


def region_from_celerities(c_slow: float, c_fast: float, x_p: float, t_m: float) -> PredictableRegion:
    """Predictable region for explicit slowest and fastest celerities."""
    t_s, t_f = x_p / c_slow, x_p / c_fast + t_m
    if t_s >= t_f:
        raise EmptyPredictionHorizonError(f"prediction horizon empty: {t_s} >= {t_f}")
    return PredictableRegion(t_s, t_f, x_p)


class ElevationPrediction(NamedTuple):
    values: np.ndarray
    out_of_region: np.ndarray


def predict_elevation(spec: ReconstructedSpectrum, x_v, t, region: Optional[PredictableRegion] = None,
                      second_order: bool = False) -> ElevationPrediction:
    """Propagated elevation at x_v; ``out_of_region`` marks times outside ``region``."""
    x_v = np.asarray(x_v, dtype=float)
    t = np.asarray(t, dtype=float)
    shape = np.broadcast_shapes(x_v.shape, t.shape)
    if spec.empty:
        values = np.zeros(shape)
    else:
        A, k, w = spec.amplitude, spec.wavenumber, spec.omega
        phase = k * x_v[..., None] - w * (t[..., None] - spec.t_ref) + spec.phase
        values = np.sum(A * np.cos(phase), axis=-1)
        if second_order:
            values = values + np.sum(0.5 * k * A * A * np.cos(2.0 * phase), axis=-1)
        values = np.broadcast_to(values, shape).copy()
    if region is None:
        flags = np.zeros(shape, dtype=bool)
    else:
        flags = np.broadcast_to(~region.contains(t), shape).copy()
        if np.any(flags):
            log.warning("elevation requested outside the predictable region at %d points",
                        int(flags.sum()))
    return ElevationPrediction(values, flags)


def spectrum_kinematics(spec: ReconstructedSpectrum, depth: float, second_order: bool = False):
    """Kinematics callable ``(x, z, t) -> (u, w, u_dot, w_dot)`` for :func:`field_wave_load`."""
    mask = spec.omega > 0
    H = 2.0 * spec.amplitude[mask]
    w = spec.omega[mask]
    k = spec.wavenumber[mask]
    e = np.mod(spec.phase[mask] + w * spec.t_ref, TWO_PI)
    g = spec.g

    def kinematics(x, z, t):
        if w.size == 0:
            zero = np.zeros(np.broadcast_shapes(np.shape(x), np.shape(z), np.shape(t)))
            return zero, zero, zero, zero
        return kinematics_terms(H, w, k, e, depth, g, second_order, x, z, t)

    return kinematics


@dataclass
class DisturbancePreview:
    """Predicted wave load at ``t0 + k dt`` for k = 0..len-1.

    ``kinematics`` optionally keeps the earth-frame particle kinematics the
    loads were built from, shape (len, 1 + n_strip, 4), so a consumer can
    re-evaluate the load at another attitude.
    """

    t0: float
    dt: float
    loads: np.ndarray
    window: tuple[float, float] = (-math.inf, math.inf)
    requested_steps: int = 0
    shortfall: int = 0
    kinematics: Optional[np.ndarray] = None

    def __post_init__(self):
        self.loads = np.asarray(self.loads, dtype=float).reshape(-1, 3)
        if self.kinematics is not None:
            self.kinematics = np.asarray(self.kinematics, dtype=float)
            if len(self.kinematics) != len(self.loads):
                raise ValueError("kinematics and loads differ in length")
        if not self.requested_steps:
            self.requested_steps = len(self.loads)

    def __len__(self) -> int:
        return len(self.loads)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.loads))

    @property
    def truncated(self) -> bool:
        return self.shortfall > 0

    @classmethod
    def zeros(cls, t0: float, dt: float, steps: int) -> "DisturbancePreview":
        return cls(t0, dt, np.zeros((steps, 3)), requested_steps=steps)

    def at(self, k: int) -> np.ndarray:
        return self.loads[k]


def predict_disturbance(spec: ReconstructedSpectrum, pose: Sequence[float], steps: int, dt: float,
                        t0: float, params: VehicleParams, depth: float,
                        region: Optional[PredictableRegion] = None,
                        second_order: bool = False) -> DisturbancePreview:
    """Preview of tau_E over ``steps`` samples with the vehicle frozen at ``pose``.

    If ``region`` is given, samples past its end are cut and reported in
    ``shortfall``.
    """
    x_v, z_v, theta = (float(v) for v in pose)
    if not (-depth <= z_v <= 0.0):
        raise ValueError(f"vehicle depth z={z_v} outside [-{depth}, 0]")
    times = t0 + dt * np.arange(steps)
    window = (-math.inf, math.inf)
    n_ok = steps
    if region is not None:
        window = region.absolute
        inside = region.contains(times)
        n_ok = int(np.argmin(inside)) if not np.all(inside) else steps
        if n_ok < steps:
            log.debug("preview truncated to %d of %d steps (t_f=%.2f)", n_ok, steps, window[1])
    times = times[:n_ok]
    if spec.empty or n_ok == 0:
        kin = np.zeros((n_ok, 1 + params.n_strip, 4))
    else:
        kin = sample_kinematics(params, spectrum_kinematics(spec, depth, second_order),
                                x_v, z_v, theta, times)
    loads = body_wave_load(params, kin, theta)
    return DisturbancePreview(t0, dt, loads, window, steps, steps - n_ok, kin)


def write_preview_csv(preview: DisturbancePreview, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, quoting=csv.QUOTE_MINIMAL)
        w.writerow(["t", "X_E", "Z_E", "M_E"])
        for t, row in zip(preview.times, preview.loads):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])


@dataclass
class WavePredictor:
    """Online DSWP: buffers probe samples, caches the spectrum, emits previews."""

    record_duration: float
    dt: float
    depth: float
    params: VehicleParams
    relative_floor: Optional[float] = 0.01
    band: Optional[tuple[float, float]] = (0.25, 2.5)
    refresh_period: float = 1.0
    second_order: bool = False
    g: float = G
    buffer: RecordBuffer = field(init=False)
    spectrum: Optional[ReconstructedSpectrum] = field(init=False, default=None)
    _t_refresh: float = field(init=False, default=-math.inf)

    def __post_init__(self):
        self.buffer = RecordBuffer(self.record_duration, self.dt)

    @property
    def ready(self) -> bool:
        return self.buffer.full

    def record(self, zeta: float, t: float) -> None:
        self.buffer.record_sample(zeta, t)

    def refresh(self, t: float, force: bool = False) -> ReconstructedSpectrum:
        due = t - self._t_refresh >= self.refresh_period - 1e-9
        if self.spectrum is None or force or due:
            self.spectrum = estimate_spectrum(self.buffer.snapshot(), band=self.band,
                                              relative_floor=self.relative_floor, g=self.g,
                                              allow_empty=True)
            self._t_refresh = t
        return self.spectrum

    def region(self, x_p: float) -> Optional[PredictableRegion]:
        if self.spectrum is None or self.spectrum.empty:
            return None
        return predictable_region(self.spectrum, x_p, self.spectrum.record_duration, self.depth)

    def preview(self, pose: Sequence[float], t0: float, steps: int,
                truncate: bool = True) -> DisturbancePreview:
        spec = self.refresh(t0)
        x_p = abs(float(pose[0]))
        region = self.region(x_p) if truncate else None
        t_end = t0 + self.dt * (steps - 1)
        if region is not None and not region.contains(t_end) and self._t_refresh < t0:
            # the cached spectrum's window ends early; newer samples extend it
            spec = self.refresh(t0, force=True)
            region = self.region(x_p)
        return predict_disturbance(spec, pose, steps, self.dt, t0, self.params, self.depth,
                                   region, self.second_order)
