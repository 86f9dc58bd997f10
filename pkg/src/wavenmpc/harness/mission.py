"""Closed-loop mission runner and its log."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from ..controllers.nmpc import NMPC
from ..controllers.pd import CascadedPD, FeedForwardPD
from ..controllers.qp import QPInfeasibleError
from ..dswp import WavePredictor
from ..estimator import EstimatorFault, ExtendedKalmanFilter
from ..vehicle import IntegrationError, actuator_limits, field_wave_load, rk4_step
from ..wave_field import full_kinematics, surface_elevation, synthesize_sea
from .config import CONTROLLER_LABELS, ScenarioConfig
from .reference import generate_reference

log = logging.getLogger(__name__)

STATE_NAMES = ("x", "z", "theta", "u", "w", "q")
DOF = ("X", "Z", "M")

CSV_COLUMNS = (
    ["t", "phase"]
    + list(STATE_NAMES)
    + [f"{s}_hat" for s in STATE_NAMES]
    + [f"P_{s}" for s in STATE_NAMES]
    + ["P_min_eig"]
    + ["x_ref", "z_ref", "theta_ref"]
    + [f"mu_{d}" for d in DOF]
    + [f"tau_{d}" for d in DOF]
    + [f"tau_pred_{d}" for d in DOF]
    + ["power", "power_elec", "solver_iterations", "kkt_residual", "rollout_error", "solver_status"]
)


class MissionAborted(RuntimeError):
    pass


@dataclass
class MissionLog:
    """Per-step record of one mission; rows are appended in time order."""

    dt: float
    n_record: int
    meta: dict = field(default_factory=dict)
    t: list = field(default_factory=list)
    phase: list = field(default_factory=list)
    truth: list = field(default_factory=list)
    estimate: list = field(default_factory=list)
    reference: list = field(default_factory=list)
    mu: list = field(default_factory=list)
    tau: list = field(default_factory=list)
    tau_pred: list = field(default_factory=list)
    power: list = field(default_factory=list)
    power_elec: list = field(default_factory=list)
    iterations: list = field(default_factory=list)
    kkt: list = field(default_factory=list)
    rollout_error: list = field(default_factory=list)
    status: list = field(default_factory=list)
    solve_time: list = field(default_factory=list)
    covariance_diag: list = field(default_factory=list)
    covariance_min_eig: list = field(default_factory=list)
    failure: Optional[str] = None

    def __len__(self) -> int:
        return len(self.t)

    @property
    def completed(self) -> bool:
        return self.failure is None

    def arrays(self) -> dict[str, np.ndarray]:
        names = ("t", "phase", "truth", "estimate", "reference", "mu", "tau", "tau_pred", "power",
                 "power_elec", "iterations", "kkt", "rollout_error", "solve_time",
                 "covariance_diag", "covariance_min_eig")
        return {n: np.asarray(getattr(self, n), dtype=float) for n in names}

    def phase2(self) -> dict[str, np.ndarray]:
        a = self.arrays()
        mask = a["phase"] == 2
        return {k: v[mask] for k, v in a.items()}

    def rows(self):
        for i in range(len(self.t)):
            yield ([self.t[i], self.phase[i]] + list(self.truth[i]) + list(self.estimate[i])
                   + list(self.covariance_diag[i]) + [self.covariance_min_eig[i]]
                   + list(self.reference[i]) + list(self.mu[i]) + list(self.tau[i])
                   + list(self.tau_pred[i])
                   + [self.power[i], self.power_elec[i], self.iterations[i], self.kkt[i],
                      self.rollout_error[i], self.status[i]])

    def to_csv(self, path: str | Path) -> None:
        """Write the log with a fixed column order; floats use the shortest exact repr."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for row in self.rows():
                w.writerow([_fmt(v) for v in row])

    def timing_to_csv(self, path: str | Path) -> None:
        """Solver wall-times, kept apart from the main log so that stays reproducible."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "solve_time"])
            for t, s in zip(self.t, self.solve_time):
                w.writerow([_fmt(t), _fmt(s)])


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def read_log_csv(path: str | Path) -> dict[str, np.ndarray]:
    """Load a mission CSV into column arrays (the status column stays text)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    out = {}
    for j, name in enumerate(header):
        col = [r[j] for r in body]
        out[name] = np.array(col) if name == "solver_status" else np.array(col, dtype=float)
    return out


class TruthModel:
    """Sea realisation and the resulting load on the vehicle."""

    def __init__(self, cfg: ScenarioConfig):
        self.params = cfg.vehicle
        self.sea = synthesize_sea(cfg.sea.spectrum(), cfg.sea.depth, cfg.vehicle.g,
                                  cfg.sea.second_order)

    def kinematics(self, xs, zs, ts):
        return full_kinematics(self.sea, xs, zs, ts)

    def load(self, t, x) -> np.ndarray:
        return field_wave_load(self.params, self.kinematics, x[..., 0], x[..., 1], x[..., 2], t)

    def probe(self, t: float) -> float:
        return float(surface_elevation(self.sea, 0.0, t))


def build_controller(name: str, cfg: ScenarioConfig):
    p = cfg.vehicle
    pd_cfg = cfg.controller.pd.build()
    if name == "cpd":
        return CascadedPD(p, pd_cfg)
    if name == "ff":
        return FeedForwardPD(p, pd_cfg)
    if name == "nmpc":
        return NMPC(p, cfg.controller.nmpc.build(cfg.mission.dt))
    raise ValueError(f"unknown controller {name!r}")


def run_mission(cfg: ScenarioConfig, progress: Optional[Callable[[int, int], None]] = None,
                raise_on_failure: bool = False, max_steps: Optional[int] = None) -> MissionLog:
    """Simulate one mission.

    Phase 1 holds the start pose with the station-keeping controller while
    the probe record fills; phase 2 runs the configured controller along the
    square. Each step: measure, EKF update, record the probe, preview (phase
    2), control, propagate the truth with the true load, EKF predict, log.
    A solver or integration fault ends the run and leaves a partial log with
    ``failure`` set. ``max_steps`` stops the run early without changing
    the reference timing.
    """
    p = cfg.vehicle
    ms = cfg.mission
    dt = ms.dt
    truth = TruthModel(cfg)
    ref = generate_reference(ms)
    predictor = WavePredictor(ms.record_duration, dt, cfg.sea.depth, p,
                              relative_floor=cfg.dswp.relative_floor,
                              band=tuple(cfg.dswp.band) if cfg.dswp.band else None,
                              refresh_period=cfg.dswp.refresh_period,
                              second_order=cfg.dswp.second_order, g=p.g)
    x = np.concatenate([np.asarray(ms.start, dtype=float), np.zeros(3)])
    ekf = ExtendedKalmanFilter(x, p, cfg.estimator.build())
    station = build_controller(cfg.controller.station_keeping, cfg)
    ctrl = build_controller(cfg.controller.name, cfg)
    horizon = cfg.controller.nmpc.horizon if isinstance(ctrl, NMPC) else 1
    lo, hi = actuator_limits(p)
    rng = np.random.default_rng(cfg.sensor.seed)
    sigma = np.array([cfg.sensor.sigma_xz, cfg.sensor.sigma_xz, cfg.sensor.sigma_theta])
    k_t = cfg.power.k_t

    mlog = MissionLog(dt=dt, n_record=ms.n_record, meta={
        "case": cfg.sea.case, "controller": CONTROLLER_LABELS[cfg.controller.name],
        "sea_seed": cfg.sea.seed, "sensor_seed": cfg.sensor.seed})
    mu_last = np.zeros(3)
    n = ms.n_steps if max_steps is None else min(ms.n_steps, int(max_steps))
    for k in range(n):
        t = k * dt
        phase = 1 if k < ms.n_record else 2
        try:
            y = x[:3] + sigma * rng.standard_normal(3)
            ekf.update(y)
            predictor.record(truth.probe(t), t)
            x_hat = ekf.x.copy()
            P_hat = ekf.P.copy()
            preview = None
            if phase == 2 and predictor.ready:
                preview = predictor.preview(x_hat[:3], t, horizon)
            iters, kkt, roll_err, status, t_solve = 0, 0.0, 0.0, "", 0.0
            if phase == 1:
                mu = station(x_hat, ref.eta[k], ref.eta_dot[k])
            elif isinstance(ctrl, NMPC):
                if k == ms.n_record:
                    ctrl.reset(mu_last)
                t0 = time.perf_counter()
                mu, sol = ctrl.step(x_hat, ref.window(k, horizon + 1), preview)
                t_solve = time.perf_counter() - t0
                iters, kkt, status = sol.iterations, sol.kkt_residual, sol.status
                roll_err = sol.rollout_error
            else:
                mu = ctrl(x_hat, ref.eta[k], ref.eta_dot[k], preview)
            if np.any(mu < lo - 1e-12) or np.any(mu > hi + 1e-12):
                raise MissionAborted(f"control {mu} outside actuator limits at t={t:.1f}")
            tau = truth.load(t, x)
            tau_pred = preview.at(0) if preview is not None and len(preview) else np.zeros(3)
            x_next = rk4_step(x, mu, truth.load, dt, p, t=t)
            ekf.predict(mu, tau_pred, dt)
        except (IntegrationError, EstimatorFault, QPInfeasibleError, MissionAborted,
                FloatingPointError, np.linalg.LinAlgError) as exc:
            mlog.failure = f"t={t:.1f}: {type(exc).__name__}: {exc}"
            log.error("mission aborted: %s", mlog.failure)
            if raise_on_failure:
                raise
            break
        nu = x[3:]
        mlog.t.append(t)
        mlog.phase.append(phase)
        mlog.truth.append(x.copy())
        mlog.estimate.append(x_hat)
        mlog.reference.append(ref.eta[k].copy())
        mlog.mu.append(np.asarray(mu, dtype=float).copy())
        mlog.tau.append(tau)
        mlog.tau_pred.append(np.asarray(tau_pred, dtype=float))
        mlog.power.append(float(np.sum(np.abs(mu * nu))))
        mlog.power_elec.append(float(k_t * np.sum(np.abs(mu) ** 1.5)))
        mlog.iterations.append(int(iters))
        mlog.kkt.append(float(kkt))
        mlog.rollout_error.append(float(roll_err))
        mlog.status.append(status)
        mlog.solve_time.append(t_solve)
        mlog.covariance_diag.append(np.diag(P_hat).copy())
        # smallest eigenvalue over the posterior and the propagated covariance
        mlog.covariance_min_eig.append(float(min(np.linalg.eigvalsh(P_hat).min(),
                                                 np.linalg.eigvalsh(ekf.P).min())))
        mu_last = np.asarray(mu, dtype=float)
        x = x_next
        if progress is not None:
            progress(k + 1, n)
    return mlog
