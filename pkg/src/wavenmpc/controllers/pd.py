"""Cascaded PD (C-PD) and PD plus wave feed-forward (FF) control laws."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..vehicle import VehicleParams, actuator_limits, kinematic_transform, wrap_angle

log = logging.getLogger(__name__)


def _diag(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return np.diag(v) if v.ndim == 1 else v


@dataclass
class PdConfig:
    Kp: np.ndarray = field(default_factory=lambda: np.diag([3.0, 3.0, 3.0]))
    Kd: np.ndarray = field(default_factory=lambda: np.diag([1.0, 1.0, 1.0]))
    Kpv: np.ndarray = field(default_factory=lambda: np.diag([40.0, 40.0, 8.0]))
    # apply the tau_max^-1 scaling to the feed-forward term (normalised units)
    normalized_ff: bool = False

    def __post_init__(self):
        self.Kp, self.Kd, self.Kpv = _diag(self.Kp), _diag(self.Kd), _diag(self.Kpv)
        for name in ("Kp", "Kd", "Kpv"):
            if np.any(np.diag(getattr(self, name)) < 0):
                raise ValueError(f"{name} must have a nonnegative diagonal")


def _clamp(mu: np.ndarray, p: VehicleParams) -> np.ndarray:
    lo, hi = actuator_limits(p)
    return np.clip(mu, lo, hi)


def pd_raw(x_hat, x_ref, xdot_ref, cfg: PdConfig) -> np.ndarray:
    """Unsaturated C-PD force.

    The outer loop turns pose error into a commanded body velocity
    ``nu_c = J^T(theta) (Kp e + Kd e_dot)``; the inner loop is
    ``Kpv (nu_c - nu)``, i.e. the stabilising sign.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    eta, nu = x_hat[:3], x_hat[3:6]
    theta = eta[2]
    e = np.asarray(x_ref[:3], dtype=float) - eta
    e[2] = wrap_angle(e[2])
    e_dot = np.asarray(xdot_ref[:3], dtype=float) - kinematic_transform(theta, nu)
    v_earth = cfg.Kp @ e + cfg.Kd @ e_dot
    c, s = np.cos(theta), np.sin(theta)
    # J^T maps earth-frame rates back to body axes
    nu_c = np.array([c * v_earth[0] - s * v_earth[1], s * v_earth[0] + c * v_earth[1], v_earth[2]])
    return cfg.Kpv @ (nu_c - nu)


def cpd_control(x_hat, x_ref, xdot_ref, cfg: PdConfig, p: VehicleParams) -> np.ndarray:
    return _clamp(pd_raw(x_hat, x_ref, xdot_ref, cfg), p)


def ff_control(x_hat, x_ref, xdot_ref, tau_preview, cfg: PdConfig, p: VehicleParams) -> np.ndarray:
    """C-PD plus cancellation of the previewed wave load at the current step.

    The compensation is the negated load estimate (added-inertia plus drag,
    the same model as the disturbance). With ``normalized_ff`` the term is
    scaled elementwise by the inverse force limits as in normalised-control
    formulations.
    """
    mu_pd = pd_raw(x_hat, x_ref, xdot_ref, cfg)
    if tau_preview is None:
        log.warning("no disturbance preview available; falling back to C-PD")
        return _clamp(mu_pd, p)
    comp = -np.asarray(tau_preview, dtype=float)
    if cfg.normalized_ff:
        comp = comp / actuator_limits(p)[1]
    return _clamp(mu_pd + comp, p)


def wave_compensation(p: VehicleParams, nu_p, nu_p_dot) -> np.ndarray:
    """``M_A nu_p_dot + D(nu_p) nu_p`` with the particle kinematics padded to 3-DoF."""
    nu_p = np.array([nu_p[0], nu_p[1], 0.0])
    nu_pd = np.array([nu_p_dot[0], nu_p_dot[1], 0.0])
    D = np.diag([p.X_u + p.X_uu * abs(nu_p[0]), p.Z_w + p.Z_ww * abs(nu_p[1]), p.M_q])
    return p.M_added @ nu_pd + D @ nu_p


class CascadedPD:
    name = "C-PD"

    def __init__(self, params: VehicleParams, cfg: PdConfig | None = None):
        self.params = params
        self.cfg = cfg or PdConfig()

    def __call__(self, x_hat, x_ref, xdot_ref, preview=None) -> np.ndarray:
        return cpd_control(x_hat, x_ref, xdot_ref, self.cfg, self.params)


class FeedForwardPD(CascadedPD):
    name = "FF"

    def __call__(self, x_hat, x_ref, xdot_ref, preview=None) -> np.ndarray:
        tau = None if preview is None or len(preview) == 0 else preview.at(0)
        return ff_control(x_hat, x_ref, xdot_ref, tau, self.cfg, self.params)
