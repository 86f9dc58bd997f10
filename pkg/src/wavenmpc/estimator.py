"""Extended Kalman filter over the RK4-discretised vehicle model.

Measurements are the pose (x, z, theta). The process Jacobian comes from
central finite differences of the discrete step, so the filter follows any
edit to the plant model without hand-derived derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .vehicle import STATE_DIM, VehicleParams, rk4_step, wrap_angle

H_POSE = np.hstack([np.eye(3), np.zeros((3, 3))])


class EstimatorFault(RuntimeError):
    def __init__(self, message: str, state=None, covariance=None):
        super().__init__(message)
        self.state = state
        self.covariance = covariance


def _check_spd(name: str, m: np.ndarray, allow_zero: bool = False) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if not np.allclose(m, m.T, atol=1e-12):
        raise ValueError(f"{name} must be symmetric")
    eig = np.linalg.eigvalsh(m)
    if (eig.min() < 0) if allow_zero else (eig.min() <= 0):
        raise ValueError(f"{name} must be positive {'semi-' if allow_zero else ''}definite")
    return m


@dataclass
class EkfConfig:
    Q: np.ndarray = field(default_factory=lambda: np.diag([1e-6, 1e-6, 1e-6, 1e-4, 1e-4, 1e-4]))
    R: np.ndarray = field(default_factory=lambda: np.diag([0.01 ** 2, 0.01 ** 2, 0.005 ** 2]))
    P0: np.ndarray = field(default_factory=lambda: np.diag([1e-4, 1e-4, 1e-4, 1e-4, 1e-4, 1e-4]))
    h_fd: float = 1e-6
    use_preview: bool = True
    # zero covariances are allowed for the noise-free consistency runs
    allow_singular: bool = False

    def __post_init__(self):
        self.Q = _check_spd("Q", self.Q, allow_zero=True)
        self.R = _check_spd("R", self.R, allow_zero=self.allow_singular)
        self.P0 = _check_spd("P0", self.P0, allow_zero=self.allow_singular)
        if not self.h_fd > 0:
            raise ValueError("h_fd must be positive")

    @classmethod
    def from_sigmas(cls, sigma_xz: float = 0.01, sigma_theta: float = 0.005, **kw) -> "EkfConfig":
        R = np.diag([sigma_xz ** 2, sigma_xz ** 2, sigma_theta ** 2])
        return cls(R=R, **kw)


@dataclass
class EkfState:
    x: np.ndarray
    P: np.ndarray

    def copy(self) -> "EkfState":
        return EkfState(self.x.copy(), self.P.copy())


def step_jacobian(x, mu, tau_e, dt: float, p: VehicleParams, h: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of one RK4 step with respect to the state.

    The step is scaled per component as ``h * max(1, |x_i|)``; all 12
    perturbed states are integrated as one batch.
    """
    x = np.asarray(x, dtype=float)
    steps = h * np.maximum(1.0, np.abs(x))
    E = np.diag(steps)
    batch = np.concatenate([x + E, x - E])
    out = rk4_step(batch, mu, tau_e, dt, p, wrap=False)
    # row i of the difference is the response to perturbing state i
    return ((out[:STATE_DIM] - out[STATE_DIM:]) / (2.0 * steps[:, None])).T


def ekf_predict(ekf: EkfState, mu, tau_e, dt: float, p: VehicleParams, cfg: EkfConfig) -> EkfState:
    x = ekf.x
    try:
        x_new = rk4_step(x, mu, tau_e, dt, p)
    except FloatingPointError as exc:
        raise EstimatorFault(f"propagation failed: {exc}", x.copy(), ekf.P.copy()) from exc
    F = step_jacobian(x, mu, tau_e, dt, p, cfg.h_fd)
    P = F @ ekf.P @ F.T + cfg.Q
    P = 0.5 * (P + P.T)
    if not np.all(np.isfinite(P)):
        raise EstimatorFault("non-finite covariance", x.copy(), ekf.P.copy())
    return EkfState(x_new, P)


def ekf_update(ekf: EkfState, y, cfg: EkfConfig) -> EkfState:
    """Joseph-form update with a pose measurement ``y = (x, z, theta)``."""
    y = np.asarray(y, dtype=float)
    H = H_POSE
    innov = y - ekf.x[:3]
    innov[2] = wrap_angle(innov[2])
    S = H @ ekf.P @ H.T + cfg.R
    try:
        if cfg.allow_singular:
            # noise-free runs: (near) null directions of S carry no information, so no gain
            w, V = np.linalg.eigh(S)
            keep = w > max(1e-12 * np.abs(w).max(initial=0.0), 1e-30)
            S_pinv = (V[:, keep] / w[keep]) @ V[:, keep].T
            K = (S_pinv @ H @ ekf.P).T
        else:
            K = np.linalg.solve(S, H @ ekf.P).T
    except np.linalg.LinAlgError as exc:
        raise EstimatorFault("innovation covariance is singular", ekf.x.copy(), ekf.P.copy()) from exc
    if not np.all(np.isfinite(K)):
        raise EstimatorFault("innovation covariance is singular", ekf.x.copy(), ekf.P.copy())
    x = ekf.x + K @ innov
    x[2] = wrap_angle(x[2])
    IKH = np.eye(STATE_DIM) - K @ H
    P = IKH @ ekf.P @ IKH.T + K @ cfg.R @ K.T
    return EkfState(x, 0.5 * (P + P.T))


class ExtendedKalmanFilter:
    """Stateful wrapper owned by the simulation loop."""

    def __init__(self, x0, params: VehicleParams, cfg: EkfConfig | None = None):
        self.cfg = cfg or EkfConfig()
        self.params = params
        self.state = EkfState(np.asarray(x0, dtype=float).copy(), self.cfg.P0.copy())

    @property
    def x(self) -> np.ndarray:
        return self.state.x

    @property
    def P(self) -> np.ndarray:
        return self.state.P

    def predict(self, mu, tau_e, dt: float) -> EkfState:
        if not self.cfg.use_preview:
            tau_e = np.zeros(3)
        self.state = ekf_predict(self.state, mu, tau_e, dt, self.params, self.cfg)
        return self.state

    def update(self, y) -> EkfState:
        self.state = ekf_update(self.state, y, self.cfg)
        return self.state
