"""Ground-truth sea state: spectral synthesis and second-order wave kinematics.

Frame convention: x horizontal, z vertical and positive up, z = 0 at the mean
free surface and the seabed at z = -d. Every component propagates towards +x
with phase ``kappa * x - omega * t + eps``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Sequence

import numpy as np

G = 9.81
TWO_PI = 2.0 * math.pi

DISPERSION_TOL = 1e-12


class DispersionError(RuntimeError):
    """Raised when the dispersion solver cannot reach the residual target."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class DepthDomainError(ValueError):
    pass


class SpectrumShape(str, enum.Enum):
    JONSWAP = "JONSWAP"
    PIERSON_MOSKOWITZ = "PiersonMoskowitz"


def solve_dispersion(omega: float, depth: float, g: float = G, max_iter: int = 50) -> float:
    """Wavenumber satisfying ``omega**2 = g * k * tanh(k * d)``.

    Newton iteration from the deep-water guess, with a bisection fallback.
    """
    if not (omega > 0 and depth > 0 and g > 0):
        raise ValueError(f"need omega, depth, g > 0; got {omega}, {depth}, {g}")
    w2 = omega * omega

    def residual(k: float) -> float:
        return g * k * math.tanh(k * depth) - w2

    # 8 ulp of the target magnitude is the floor for the residual.
    tol = max(DISPERSION_TOL, 8.0 * np.finfo(float).eps * w2)
    k = w2 / g
    for _ in range(max_iter):
        th = math.tanh(k * depth)
        f = g * k * th - w2
        if abs(f) <= tol:
            return k
        df = g * th + g * k * depth * (1.0 - th * th)
        k_new = k - f / df
        if not (k_new > 0 and math.isfinite(k_new)):
            break
        k = k_new
    if abs(residual(k)) <= tol:
        return k
    return _bisect_dispersion(omega, depth, g, tol)


def _bisect_dispersion(omega: float, depth: float, g: float, tol: float) -> float:
    w2 = omega * omega
    lo = 0.0
    # residual is monotone increasing in k; hi bounds both limits
    hi = max(w2 / g, omega / math.sqrt(g * depth)) * 2.0 + 1e-12
    while g * hi * math.tanh(hi * depth) < w2:
        hi *= 2.0
    f = float("inf")
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        f = g * mid * math.tanh(mid * depth) - w2
        if abs(f) <= tol or hi - lo <= 4 * np.finfo(float).eps * hi:
            if abs(f) <= max(tol, 1e-9):
                return mid
            break
        if f < 0:
            lo = mid
        else:
            hi = mid
    raise DispersionError("dispersion solver did not converge", abs(f))


@dataclass(frozen=True)
class WaveComponent:
    """One monochromatic wave: height H, frequency omega, wavenumber kappa, phase eps."""

    height: float
    omega: float
    kappa: float
    phase: float
    deep_water: bool = False

    def __post_init__(self):
        if self.height < 0:
            raise ValueError("height must be >= 0")
        if not (self.omega > 0 and self.kappa > 0):
            raise ValueError("omega and kappa must be > 0")
        if not (0.0 <= self.phase < TWO_PI):
            object.__setattr__(self, "phase", float(self.phase % TWO_PI))

    @property
    def amplitude(self) -> float:
        return 0.5 * self.height

    @classmethod
    def from_frequency(cls, height: float, omega: float, phase: float, depth: float,
                       g: float = G, deep_water: bool = False) -> "WaveComponent":
        kappa = omega * omega / g if deep_water else solve_dispersion(omega, depth, g)
        return cls(height, omega, kappa, phase, deep_water)


def celerity(comp: WaveComponent) -> float:
    return comp.omega / comp.kappa


@dataclass(frozen=True)
class SeaState:
    """An ordered set of wave components over a flat seabed of depth ``depth``."""

    components: tuple[WaveComponent, ...]
    depth: float
    g: float = G
    second_order: bool = True
    check_dispersion: bool = field(default=True, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if not self.components:
            raise ValueError("SeaState needs at least one component")
        if not self.depth > 0:
            raise ValueError("depth must be > 0")
        if self.check_dispersion:
            for c in self.components:
                if c.deep_water:
                    continue
                r = abs(c.omega ** 2 - self.g * c.kappa * math.tanh(c.kappa * self.depth))
                if r >= 1e-9:
                    raise ValueError(
                        f"component omega={c.omega} violates dispersion at d={self.depth} "
                        f"(residual {r:.2e}); flag deep_water=True for kappa=omega^2/g")

    @cached_property
    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(H, omega, kappa, eps) as float arrays."""
        H = np.array([c.height for c in self.components])
        w = np.array([c.omega for c in self.components])
        k = np.array([c.kappa for c in self.components])
        e = np.array([c.phase for c in self.components])
        return H, w, k, e

    def with_second_order(self, enabled: bool) -> "SeaState":
        return SeaState(self.components, self.depth, self.g, enabled, check_dispersion=False)

    @property
    def significant_wave_height(self) -> float:
        H = self.arrays[0]
        m0 = float(np.sum((H / 2.0) ** 2) / 2.0)
        return 4.0 * math.sqrt(m0)

    def to_dict(self) -> dict:
        return {
            "depth": self.depth,
            "g": self.g,
            "second_order": self.second_order,
            "components": [
                {"height": c.height, "omega": c.omega, "kappa": c.kappa,
                 "phase": c.phase, "deep_water": c.deep_water}
                for c in self.components
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SeaState":
        comps = tuple(WaveComponent(**c) for c in data["components"])
        return cls(comps, float(data["depth"]), float(data.get("g", G)),
                   bool(data.get("second_order", True)))


@dataclass(frozen=True)
class SpectrumSpec:
    hs: float
    tp: float
    n_components: int = 128
    seed: int = 0
    shape: SpectrumShape = SpectrumShape.JONSWAP
    gamma: float = 3.3

    def __post_init__(self):
        if not (self.hs >= 0 and self.tp > 0):
            raise ValueError("hs must be >= 0 and tp positive")
        if self.n_components < 1:
            raise ValueError("n_components must be >= 1")
        object.__setattr__(self, "shape", SpectrumShape(self.shape))


def spectral_density(spec: SpectrumSpec, omega: np.ndarray) -> np.ndarray:
    """One-sided variance density S(omega) in m^2 s/rad, not yet renormalised."""
    omega = np.asarray(omega, dtype=float)
    wp = TWO_PI / spec.tp
    pm = (5.0 / 16.0) * spec.hs ** 2 * wp ** 4 * omega ** -5 * np.exp(-1.25 * (wp / omega) ** 4)
    if spec.shape is SpectrumShape.PIERSON_MOSKOWITZ:
        return pm
    sigma = np.where(omega <= wp, 0.07, 0.09)
    r = np.exp(-((omega - wp) ** 2) / (2.0 * sigma ** 2 * wp ** 2))
    return (1.0 - 0.287 * math.log(spec.gamma)) * pm * spec.gamma ** r


def synthesize_sea(spec: SpectrumSpec, depth: float, g: float = G,
                   second_order: bool = True) -> SeaState:
    """Random-phase realisation of ``spec`` with N equal-width frequency bins.

    Bins span [0.4, 4] times the peak frequency. Heights follow the area rule
    ``H = 2 sqrt(2 S dw)`` and are rescaled so the discrete zeroth moment
    reproduces ``spec.hs`` exactly.
    """
    wp = TWO_PI / spec.tp
    n = spec.n_components
    if n == 1:
        omegas = np.array([wp])
        dw = 3.6 * wp
    else:
        edges = np.linspace(0.4 * wp, 4.0 * wp, n + 1)
        omegas = 0.5 * (edges[:-1] + edges[1:])
        dw = edges[1] - edges[0]
    # shape from a unit-height spectrum so hs = 0 gives a calm sea
    S = spectral_density(replace(spec, hs=1.0), omegas)
    m0 = float(np.sum(S) * dw)
    S = S * (spec.hs ** 2 / 16.0) / m0
    heights = 2.0 * np.sqrt(2.0 * S * dw)
    rng = np.random.default_rng(spec.seed)
    phases = rng.uniform(0.0, TWO_PI, size=n)
    comps = tuple(
        WaveComponent.from_frequency(float(h), float(w), float(e), depth, g)
        for h, w, e in zip(heights, omegas, phases)
    )
    return SeaState(comps, depth, g, second_order)


def surface_elevation(sea: SeaState, x, t):
    """Second-order surface elevation zeta(x, t); broadcasts over x and t."""
    H, w, k, e = sea.arrays
    x = np.asarray(x, dtype=float)[..., None]
    t = np.asarray(t, dtype=float)[..., None]
    phase = k * x - w * t + e
    a = 0.5 * H
    zeta = np.sum(a * np.cos(phase), axis=-1)
    if sea.second_order:
        zeta = zeta + np.sum(0.5 * k * a * a * np.cos(2.0 * phase), axis=-1)
    return zeta


def _depth_profiles(k: np.ndarray, z: np.ndarray, d: float):
    """Depth attenuation factors written with decaying exponentials only.

    Returns cosh(k(z+d))/cosh(kd), sinh(k(z+d))/cosh(kd),
    cosh(2k(z+d))/sinh^4(kd) and sinh(2k(z+d))/sinh^4(kd).
    """
    zpd = z + d
    e_kz = np.exp(k * z)
    e_far = np.exp(-k * (zpd + d))
    den1 = 1.0 + np.exp(-2.0 * k * d)
    ch1 = (e_kz + e_far) / den1
    sh1 = (e_kz - e_far) / den1
    base = 8.0 * np.exp(2.0 * k * (z - d)) / (-np.expm1(-2.0 * k * d)) ** 4
    e4 = np.exp(-4.0 * k * zpd)
    ch2 = base * (1.0 + e4)
    sh2 = base * (1.0 - e4)
    return ch1, sh1, ch2, sh2


def _check_depth(z, d: float):
    z = np.asarray(z, dtype=float)
    if np.any(z > 1e-12) or np.any(z < -d - 1e-12):
        raise DepthDomainError(f"z must lie in [-{d}, 0]")
    return np.clip(z, -d, 0.0)


def kinematics_arrays(H, w, k, e, depth: float, g: float, second_order: bool, x, z, t,
                      derivative: bool = False):
    """Summed particle velocity (or its time derivative) for component arrays."""
    u, v, ud, vd = kinematics_terms(H, w, k, e, depth, g, second_order, x, z, t)
    return (ud, vd) if derivative else (u, v)


def kinematics_terms(H, w, k, e, depth, g, second_order, x, z, t):
    """Velocity and its time derivative, sharing the trigonometric and depth terms."""
    z = _check_depth(z, depth)
    x, z, t = np.broadcast_arrays(np.asarray(x, float), z, np.asarray(t, float))
    xs, zs, ts = x[..., None], z[..., None], t[..., None]
    phase = k * xs - w * ts + e
    c = w / k
    ch1, sh1, ch2, sh2 = _depth_profiles(k, zs, depth)
    amp1 = g * H / (2.0 * c)
    cos1, sin1 = np.cos(phase), np.sin(phase)
    a_u, a_v = amp1 * ch1, amp1 * sh1
    u = a_u * cos1
    v = a_v * sin1
    # d/dt cos(phase) = w sin(phase), d/dt sin(phase) = -w cos(phase)
    ud = a_u * w * sin1
    vd = -a_v * w * cos1
    if second_order:
        amp2 = (3.0 / 16.0) * c * k * k * H * H
        cos2 = cos1 * cos1 - sin1 * sin1
        sin2 = 2.0 * sin1 * cos1
        b_u, b_v = amp2 * ch2, amp2 * sh2
        u = u + b_u * cos2
        v = v + b_v * sin2
        ud = ud + b_u * 2.0 * w * sin2
        vd = vd - b_v * 2.0 * w * cos2
    return u.sum(axis=-1), v.sum(axis=-1), ud.sum(axis=-1), vd.sum(axis=-1)


def _kinematics(sea: SeaState, x, z, t, derivative: bool):
    H, w, k, e = sea.arrays
    return kinematics_arrays(H, w, k, e, sea.depth, sea.g, sea.second_order, x, z, t, derivative)


def full_kinematics(sea: SeaState, x, z, t):
    """(u, w, u_dot, w_dot) in one call, the shape the load model consumes."""
    H, w, k, e = sea.arrays
    return kinematics_terms(H, w, k, e, sea.depth, sea.g, sea.second_order, x, z, t)


def particle_velocity(sea: SeaState, x, z, t):
    """Earth-frame water particle velocity (u_p, w_p) at depth z <= 0."""
    return _kinematics(sea, x, z, t, derivative=False)


def particle_acceleration(sea: SeaState, x, z, t):
    """Local time derivative of :func:`particle_velocity`."""
    return _kinematics(sea, x, z, t, derivative=True)
