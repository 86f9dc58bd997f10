"""Planar surge/heave/pitch dynamics of a BlueROV2 Heavy class vehicle.

State vectors are laid out as ``[x, z, theta, u, w, q]``: earth-frame pose
followed by body-frame velocity. All array functions broadcast over leading
batch dimensions, which the NMPC uses to difference many stages at once.

Frame and sign notes (z positive up, unlike the usual marine z-down):

* ``x_dot = u cos(theta) + w sin(theta)``, ``z_dot = -u sin(theta) + w cos(theta)``
* restoring vector ``g`` sits on the left-hand side, so with B > W it carries
  ``W - B`` in heave and a 2 N buoyant vehicle needs ``mu_z = -2 N`` to hover.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from functools import cached_property
from typing import Callable, NamedTuple, Union

import numpy as np

STATE_DIM = 6
CONTROL_DIM = 3


class ConfigurationError(ValueError):
    pass


class IntegrationError(FloatingPointError):
    def __init__(self, message: str, state=None, t: float | None = None):
        super().__init__(message)
        self.state = None if state is None else np.array(state, copy=True)
        self.t = t


@dataclass(frozen=True)
class VehicleParams:
    """Hydrodynamic and inertial coefficients of a BlueROV2 Heavy.

    ``length``, ``moment_arm`` and ``n_strip`` are not published values and are
    configurable defaults.
    """

    weight: float = 112.8            # W [N]
    buoyancy: float = 114.8          # B [N]
    inertia_y: float = 0.253         # I_y [kg m^2]
    X_du: float = 6.36               # [kg]
    Z_dw: float = 18.68              # [kg]
    M_dq: float = 0.135              # [kg m^2]
    X_dq: float = 0.67               # [kg m]
    M_du: float = 0.67               # [kg m]
    X_u: float = 13.7                # [kg/s]
    Z_w: float = 33.0                # [kg/s]
    M_q: float = 0.80                # [kg m^2/s]
    X_uu: float = 141.0              # [N s^2/m^2]
    Z_ww: float = 190.0              # [N s^2/m^2]
    M_qq: float = 0.47               # [N m s^2]
    r_b: tuple[float, float, float] = (0.0, 0.0, 0.028)  # [m]
    t_max: float = 35.0              # per-thruster [N]
    thruster_offset: float = math.radians(45.0)          # alpha [rad]
    length: float = 0.457            # L [m]
    moment_arm: float = 0.12         # pitch moment arm for the M bound [m]
    n_strip: int = 10
    g: float = 9.81

    def __post_init__(self):
        object.__setattr__(self, "r_b", tuple(float(v) for v in self.r_b))
        coeffs = ("weight", "buoyancy", "inertia_y", "X_du", "Z_dw", "M_dq", "X_u", "Z_w",
                  "M_q", "X_uu", "Z_ww", "M_qq")
        for name in coeffs:
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0")
        if not (self.t_max > 0 and self.length > 0 and self.n_strip >= 1):
            raise ConfigurationError("t_max, length must be > 0 and n_strip >= 1")
        M = _assemble_mass(self)
        if np.any(np.linalg.eigvalsh(M) <= 0):
            raise ConfigurationError("mass matrix is not positive definite")

    @property
    def mass(self) -> float:
        return self.weight / self.g

    @cached_property
    def M(self) -> np.ndarray:
        return _assemble_mass(self)

    @cached_property
    def M_inv(self) -> np.ndarray:
        return np.linalg.inv(self.M)

    @cached_property
    def M_added(self) -> np.ndarray:
        MA = np.array([[self.X_du, 0.0, self.X_dq],
                       [0.0, self.Z_dw, 0.0],
                       [self.M_du, 0.0, self.M_dq]])
        return 0.5 * (MA + MA.T)

    @cached_property
    def _rhs_coef(self) -> tuple:
        """Plain-float coefficients for :func:`dynamics_rhs`."""
        M = self.M
        return (tuple(float(v) for v in M[:2].ravel()),
                tuple(float(v) for v in self.M_inv.ravel()),
                (self.X_u, self.X_uu, self.Z_w, self.Z_ww, self.M_q, self.M_qq),
                (self.buoyancy - self.weight, self.weight - self.buoyancy,
                 float(self.r_b[2]) * self.buoyancy))

    @cached_property
    def _strip_weights(self) -> tuple:
        return tuple(float(v) for v in self.strip_offsets / self.n_strip)

    @cached_property
    def strip_offsets(self) -> np.ndarray:
        """Body-frame midpoints x' of the strips along [-L/2, L/2]."""
        n = self.n_strip
        return (np.arange(n) + 0.5) * (self.length / n) - 0.5 * self.length

    def to_dict(self) -> dict:
        return {f.name: (list(getattr(self, f.name)) if f.name == "r_b" else getattr(self, f.name))
                for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "VehicleParams":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown vehicle keys: {sorted(unknown)}")
        return cls(**data)

    def replace(self, **changes) -> "VehicleParams":
        return replace(self, **changes)


def _assemble_mass(p: VehicleParams) -> np.ndarray:
    m = p.weight / p.g
    M = np.diag([m, m, p.inertia_y]) + np.array([[p.X_du, 0.0, p.X_dq],
                                                  [0.0, p.Z_dw, 0.0],
                                                  [p.M_du, 0.0, p.M_dq]])
    return 0.5 * (M + M.T)


def mass_matrix(p: VehicleParams) -> np.ndarray:
    return p.M.copy()


@dataclass
class VehicleState:
    eta: np.ndarray = field(default_factory=lambda: np.zeros(3))
    nu: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.eta = np.asarray(self.eta, dtype=float).copy()
        self.nu = np.asarray(self.nu, dtype=float).copy()
        self.eta[2] = wrap_angle(self.eta[2])
        if not (np.all(np.isfinite(self.eta)) and np.all(np.isfinite(self.nu))):
            raise ValueError("vehicle state must be finite")

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.eta, self.nu])

    @classmethod
    def from_array(cls, x) -> "VehicleState":
        x = np.asarray(x, dtype=float)
        return cls(x[:3], x[3:6])


class GeneralizedForce(NamedTuple):
    X: float
    Z: float
    M: float


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    w = np.mod(-np.asarray(a, dtype=float) + math.pi, 2.0 * math.pi)
    w = math.pi - w
    return float(w) if np.ndim(w) == 0 else w


def rotation(theta):
    """J(theta) restricted to the translational block: earth = J @ body."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, s], [-s, c]])


def kinematic_transform(theta, nu):
    """eta_dot = J(theta) nu."""
    nu = np.asarray(nu, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    u, w, q = nu[..., 0], nu[..., 1], nu[..., 2]
    return np.stack([u * c + w * s, -u * s + w * c, q], axis=-1)


def coriolis_matrix(p: VehicleParams, nu) -> np.ndarray:
    nu = np.asarray(nu, dtype=float)
    P = p.M[:2] @ nu
    Px, Pz = P
    return np.array([[0.0, 0.0, -Pz],
                     [0.0, 0.0, Px],
                     [Pz, -Px, 0.0]])


def _coriolis_times_nu(p: VehicleParams, nu: np.ndarray) -> np.ndarray:
    u, w, q = nu[..., 0], nu[..., 1], nu[..., 2]
    M = p.M
    Px = M[0, 0] * u + M[0, 1] * w + M[0, 2] * q
    Pz = M[1, 0] * u + M[1, 1] * w + M[1, 2] * q
    return np.stack([-Pz * q, Px * q, Pz * u - Px * w], axis=-1)


def damping_matrix(p: VehicleParams, nu) -> np.ndarray:
    u, w, q = np.asarray(nu, dtype=float)
    return np.diag([p.X_u + p.X_uu * abs(u), p.Z_w + p.Z_ww * abs(w), p.M_q + p.M_qq * abs(q)])


def _damping_times_nu(p: VehicleParams, nu: np.ndarray) -> np.ndarray:
    u, w, q = nu[..., 0], nu[..., 1], nu[..., 2]
    return np.stack([(p.X_u + p.X_uu * np.abs(u)) * u,
                     (p.Z_w + p.Z_ww * np.abs(w)) * w,
                     (p.M_q + p.M_qq * np.abs(q)) * q], axis=-1)


def restoring_forces(p: VehicleParams, theta):
    """Hydrostatic restoring vector g(eta), left-hand-side convention."""
    s, c = np.sin(theta), np.cos(theta)
    W, B = p.weight, p.buoyancy
    return np.stack([(B - W) * s, (W - B) * c, p.r_b[2] * B * s], axis=-1)


def wave_load(p: VehicleParams, nu_p, nu_p_dot, strip_w=None, strip_w_dot=None) -> np.ndarray:
    """Low-order added-inertia plus drag wave load tau_E = (X_E, Z_E, M_E).

    ``nu_p`` / ``nu_p_dot`` are body-frame particle velocity and acceleration
    (surge, heave) at the vehicle centre, shape (..., 2). ``strip_w`` and
    ``strip_w_dot`` hold the body-heave kinematics at each strip, shape
    (..., n_strip); the pitch moment is the midpoint-rule strip integral of
    the heave load density times the lever arm x'. Without strip data the
    moment is zero.
    """
    nu_p = np.asarray(nu_p, dtype=float)
    nu_p_dot = np.asarray(nu_p_dot, dtype=float)
    vx, vz = nu_p[..., 0], nu_p[..., 1]
    ax, az = nu_p_dot[..., 0], nu_p_dot[..., 1]
    X = p.X_du * ax + (p.X_u + p.X_uu * np.abs(vx)) * vx
    Z = p.Z_dw * az + (p.Z_w + p.Z_ww * np.abs(vz)) * vz
    if strip_w is None:
        M = np.zeros_like(X)
    else:
        sw = np.asarray(strip_w, dtype=float)
        sa = np.asarray(strip_w_dot, dtype=float)
        z_strip = p.Z_dw * sa + (p.Z_w + p.Z_ww * np.abs(sw)) * sw
        # load per unit length is Z/L; the dx' = L/n factor cancels L
        M = np.sum(z_strip * p.strip_offsets, axis=-1) / p.n_strip
    return np.stack([X, Z, M], axis=-1)


KinematicsFn = Callable[[np.ndarray, np.ndarray, np.ndarray], tuple]


def sample_kinematics(p: VehicleParams, kinematics: KinematicsFn, x, z, theta, t) -> np.ndarray:
    """Earth-frame particle kinematics at the vehicle centre and its strips.

    Returns shape (..., 1 + n_strip, 4) holding ``(u, w, u_dot, w_dot)``;
    entry 0 is the centre. Inputs broadcast over leading dimensions.
    """
    x, z, theta, t = (np.asarray(v, dtype=float) for v in (x, z, theta, t))
    x, z, theta, t = np.broadcast_arrays(x, z, theta, t)
    offs = np.concatenate([[0.0], p.strip_offsets])
    c, s = np.cos(theta)[..., None], np.sin(theta)[..., None]
    # body x-axis in earth frame is (cos, -sin)
    xs = x[..., None] + offs * c
    zs = z[..., None] - offs * s
    ts = np.broadcast_to(t[..., None], xs.shape)
    return np.stack(kinematics(xs, zs, ts), axis=-1)


def body_wave_load(p: VehicleParams, kin, theta) -> np.ndarray:
    """:func:`wave_load` from earth-frame kinematics seen at attitude ``theta``.

    ``kin`` has shape (..., 1 + n_strip, 4) as returned by
    :func:`sample_kinematics`; ``theta`` broadcasts against its leading
    dimensions. Written out component-wise because the NMPC calls it inside
    every RK4 stage.
    """
    kin = np.asarray(kin, dtype=float)
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    # body = R^T earth, at the centre
    uc, wc, udc, wdc = kin[..., 0, 0], kin[..., 0, 1], kin[..., 0, 2], kin[..., 0, 3]
    vx = c * uc - s * wc
    vz = s * uc + c * wc
    ax = c * udc - s * wdc
    az = s * udc + c * wdc
    X = p.X_du * ax + (p.X_u + p.X_uu * np.abs(vx)) * vx
    Z = p.Z_dw * az + (p.Z_w + p.Z_ww * np.abs(vz)) * vz
    # body-heave kinematics along the strips
    cs, ss = c[..., None], s[..., None]
    sw = ss * kin[..., 1:, 0] + cs * kin[..., 1:, 1]
    sa = ss * kin[..., 1:, 2] + cs * kin[..., 1:, 3]
    z_strip = p.Z_dw * sa + (p.Z_w + p.Z_ww * np.abs(sw)) * sw
    M = z_strip @ (p.strip_offsets / p.n_strip)
    out = np.empty(np.broadcast_shapes(X.shape, M.shape) + (3,))
    out[..., 0] = X
    out[..., 1] = Z
    out[..., 2] = M
    return out


def field_wave_load(p: VehicleParams, kinematics: KinematicsFn, x, z, theta, t) -> np.ndarray:
    """Evaluate :func:`wave_load` from an earth-frame kinematics field.

    ``kinematics(xs, zs, ts)`` returns ``(u, w, u_dot, w_dot)`` arrays. The
    vehicle centre and the strips are evaluated in one batched call; inputs
    broadcast over leading dimensions.
    """
    kin = sample_kinematics(p, kinematics, x, z, theta, t)
    theta = np.broadcast_to(np.asarray(theta, dtype=float), kin.shape[:-2])
    return body_wave_load(p, kin, theta)


def dynamics_rhs(x, mu, tau_e, p: VehicleParams) -> np.ndarray:
    """Continuous-time state derivative; broadcasts over leading dimensions."""
    x = np.asarray(x, dtype=float)
    f = np.asarray(mu, dtype=float) + np.asarray(tau_e, dtype=float)
    th, u, w, q = x[..., 2], x[..., 3], x[..., 4], x[..., 5]
    c, s = np.cos(th), np.sin(th)
    (m00, m01, m02, m10, m11, m12), mi, (dx, dxx, dz, dzz, dm, dmm), (bw, wb, bzb) = p._rhs_coef
    # Coriolis/centripetal from the momentum P = M nu, damping, restoring
    Px = m00 * u + m01 * w + m02 * q
    Pz = m10 * u + m11 * w + m12 * q
    fx = f[..., 0] + Pz * q - (dx + dxx * np.abs(u)) * u - bw * s
    fz = f[..., 1] - Px * q - (dz + dzz * np.abs(w)) * w - wb * c
    fm = f[..., 2] - (Pz * u - Px * w) - (dm + dmm * np.abs(q)) * q - bzb * s
    out = np.empty(np.broadcast_shapes(x.shape, f.shape[:-1] + (6,)))
    out[..., 0] = u * c + w * s
    out[..., 1] = w * c - u * s
    out[..., 2] = q
    out[..., 3] = mi[0] * fx + mi[1] * fz + mi[2] * fm
    out[..., 4] = mi[3] * fx + mi[4] * fz + mi[5] * fm
    out[..., 5] = mi[6] * fx + mi[7] * fz + mi[8] * fm
    return out


Signal = Union[np.ndarray, Callable]


def _eval_signal(sig, t: float, x: np.ndarray):
    if callable(sig):
        try:
            return sig(t, x)
        except TypeError:
            return sig(t)
    return sig


def rk4_step(x, mu: Signal, tau_e: Signal, dt: float, p: VehicleParams,
             t: float = 0.0, wrap: bool = True) -> np.ndarray:
    """One classical RK4 step.

    ``mu`` and ``tau_e`` are either arrays (held over the step) or callables
    ``f(t)`` / ``f(t, x)`` sampled at t, t + dt/2 and t + dt.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, dtype=float)
    h2 = 0.5 * dt
    t_mid, t_end = t + h2, t + dt

    def f(tt, xx):
        return dynamics_rhs(xx, _eval_signal(mu, tt, xx), _eval_signal(tau_e, tt, xx), p)

    k1 = f(t, x)
    k2 = f(t_mid, x + h2 * k1)
    k3 = f(t_mid, x + h2 * k2)
    k4 = f(t_end, x + dt * k3)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise IntegrationError(f"non-finite state after RK4 step at t={t:.3f}", x, t)
    if wrap:
        out[..., 2] = wrap_angle(out[..., 2])
    return out


def _rhs_scalar(p: VehicleParams, x, fx, fz, fm):
    (m00, m01, m02, m10, m11, m12), mi, (dx, dxx, dz, dzz, dm, dmm), (bw, wb, bzb) = p._rhs_coef
    th, u, w, q = x[2], x[3], x[4], x[5]
    c, s = math.cos(th), math.sin(th)
    Px = m00 * u + m01 * w + m02 * q
    Pz = m10 * u + m11 * w + m12 * q
    fx = fx + Pz * q - (dx + dxx * abs(u)) * u - bw * s
    fz = fz - Px * q - (dz + dzz * abs(w)) * w - wb * c
    fm = fm - (Pz * u - Px * w) - (dm + dmm * abs(q)) * q - bzb * s
    return (u * c + w * s, w * c - u * s, q,
            mi[0] * fx + mi[1] * fz + mi[2] * fm,
            mi[3] * fx + mi[4] * fz + mi[5] * fm,
            mi[6] * fx + mi[7] * fz + mi[8] * fm)


def _load_scalar(p: VehicleParams, kin, theta):
    c, s = math.cos(theta), math.sin(theta)
    uc, wc, udc, wdc = kin[0]
    vx, vz = c * uc - s * wc, s * uc + c * wc
    ax, az = c * udc - s * wdc, s * udc + c * wdc
    X = p.X_du * ax + (p.X_u + p.X_uu * abs(vx)) * vx
    Z = p.Z_dw * az + (p.Z_w + p.Z_ww * abs(vz)) * vz
    M = 0.0
    for (u, w, ud, wd), r in zip(kin[1:], p._strip_weights):
        sw = s * u + c * w
        M += (p.Z_dw * (s * ud + c * wd) + (p.Z_w + p.Z_ww * abs(sw)) * sw) * r
    return X, Z, M


def rk4_step_single(x, mu, dt: float, p: VehicleParams, tau=None, kin=None) -> np.ndarray:
    """Scalar-math RK4 step for one state, without angle wrapping.

    Same result as :func:`rk4_step` with a held control. The load is either
    a held body-frame ``tau`` or frozen earth-frame kinematics ``kin`` of
    shape (1 + n_strip, 4) evaluated at every sub-stage pitch. Used for
    sequential rollouts, where array overhead dominates.
    """
    x = [float(v) for v in x]
    mx, mz, mm = (float(v) for v in mu)
    if kin is not None:
        kin = np.asarray(kin, dtype=float).tolist()
        tx = tz = tm = 0.0
    elif tau is not None:
        tx, tz, tm = (float(v) for v in tau)
    else:
        tx = tz = tm = 0.0

    def f(xx):
        if kin is None:
            return _rhs_scalar(p, xx, mx + tx, mz + tz, mm + tm)
        lx, lz, lm = _load_scalar(p, kin, xx[2])
        return _rhs_scalar(p, xx, mx + lx, mz + lz, mm + lm)

    h2 = 0.5 * dt
    k1 = f(x)
    k2 = f([a + h2 * b for a, b in zip(x, k1)])
    k3 = f([a + h2 * b for a, b in zip(x, k2)])
    k4 = f([a + dt * b for a, b in zip(x, k3)])
    out = np.array([a + (dt / 6.0) * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
                    for a, b1, b2, b3, b4 in zip(x, k1, k2, k3, k4)])
    if not np.all(np.isfinite(out)):
        raise IntegrationError("non-finite state after RK4 step", np.asarray(x))
    return out


def actuator_limits(p: VehicleParams) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric box (lower, upper) on the generalized control force."""
    f = 4.0 * p.t_max * math.cos(p.thruster_offset)
    m = 2.0 * p.t_max * p.moment_arm
    hi = np.array([f, f, m])
    return -hi, hi


def hover_force(p: VehicleParams) -> np.ndarray:
    """Control force that holds the vehicle at rest with theta = 0."""
    return restoring_forces(p, 0.0).copy()
