"""Fast invariant suite behind ``wavenmpc validate``.

Each check is a small self-contained experiment returning a :class:`Check`.
None of them needs a full mission, so the whole suite runs in seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..controllers.nmpc import NMPC
from ..dswp import (ElevationRecord, estimate_spectrum, predict_disturbance, predict_elevation,
                    predictable_region, region_from_celerities)
from ..estimator import EkfConfig, ExtendedKalmanFilter
from ..vehicle import (actuator_limits, coriolis_matrix, field_wave_load, hover_force, mass_matrix,
                       rk4_step)
from ..wave_field import (SeaState, WaveComponent, full_kinematics, solve_dispersion,
                          surface_elevation)
from .config import ScenarioConfig


@dataclass
class Check:
    name: str
    passed: bool
    detail: str

    def __post_init__(self):
        self.passed = bool(self.passed)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def check_dynamics_algebra(cfg: ScenarioConfig) -> Check:
    p = cfg.vehicle
    rng = np.random.default_rng(0)
    skew = max(np.abs(C + C.T).max() for C in
               (coriolis_matrix(p, rng.normal(scale=2.0, size=3)) for _ in range(100)))
    M = mass_matrix(p)
    spd = bool(np.allclose(M, M.T) and np.linalg.eigvalsh(M).min() > 0)
    res = 0.0
    for d in (5.0, 54.0, 500.0):
        for w in np.linspace(0.05, 5.0, 50):
            k = solve_dispersion(w, d, p.g)
            res = max(res, abs(w * w - p.g * k * math.tanh(k * d)))
    ok = skew < 1e-12 and spd and res < 1e-9
    return Check("dynamics algebra", ok,
                 f"max|C+C'|={skew:.1e}, M SPD={spd}, dispersion residual={res:.1e}")


def check_rk4_order(cfg: ScenarioConfig) -> Check:
    p = cfg.vehicle
    x0 = np.array([0.0, -5.0, 0.3, 0.5, -0.2, 0.4])
    mu = np.array([20.0, -10.0, 1.0])
    T = 2.0

    def run(dt):
        x = x0.copy()
        for i in range(int(round(T / dt))):
            x = rk4_step(x, mu, np.zeros(3), dt, p)
        return x

    ref = run(0.1 / 64)
    e1 = np.abs(run(0.1) - ref).max()
    e2 = np.abs(run(0.05) - ref).max()
    order = math.log2(e1 / e2)
    return Check("RK4 order", order >= 3.5, f"observed order {order:.2f}")


def check_hover(cfg: ScenarioConfig) -> Check:
    p = cfg.vehicle
    mu = hover_force(p)
    x0 = np.array([50.0, -8.0, 0.0, 0.0, 0.0, 0.0])
    x = x0.copy()
    for _ in range(100):
        x = rk4_step(x, mu, np.zeros(3), 0.1, p)
    drift = float(np.abs(x[:3] - x0[:3]).max())
    return Check("hover balance", drift <= 1e-6, f"mu={np.round(mu, 6).tolist()}, drift {drift:.1e} m")


def _linear_deep_sea(hs: float = 2.78, tp: float = 7.1, n: int = 60, depth: float = 54.0,
                     seed: int = 3) -> SeaState:
    """Random-phase linear sea with deep-water wavenumbers (the predictor's own model)."""
    from ..wave_field import SpectrumSpec, spectral_density
    spec = SpectrumSpec(hs=1.0, tp=tp, n_components=n)
    wp = 2.0 * math.pi / tp
    w = np.linspace(0.6 * wp, 2.5 * wp, n)
    dw = w[1] - w[0]
    S = spectral_density(spec, w)
    S *= (hs ** 2 / 16.0) / (np.sum(S) * dw)
    H = 2.0 * np.sqrt(2.0 * S * dw)
    phases = np.random.default_rng(seed).uniform(0.0, 2.0 * math.pi, n)
    comps = [WaveComponent.from_frequency(float(h), float(om), float(e), depth, deep_water=True)
             for h, om, e in zip(H, w, phases)]
    return SeaState(tuple(comps), depth, second_order=False)


def check_round_trip(cfg: ScenarioConfig) -> Check:
    sea = _linear_deep_sea()
    dt, T = 0.1, 300.0
    t = dt * np.arange(int(T / dt))
    zeta = surface_elevation(sea, 0.0, t)
    spec = estimate_spectrum(ElevationRecord(zeta, dt, 0.0))
    err = float(np.abs(predict_elevation(spec, 0.0, t).values - zeta).max())
    return Check("DSWP round trip", err <= 1e-8, f"max error {err:.1e} m")


def check_region_algebra(cfg: ScenarioConfig) -> Check:
    r = region_from_celerities(5.0, 10.0, 50.0, 300.0)
    err = max(abs(r.t_s - 10.0), abs(r.t_f - 305.0))
    return Check("predictable region", err <= 1e-12, f"t_s={r.t_s}, t_f={r.t_f}")


def check_dswp_fidelity(cfg: ScenarioConfig) -> Check:
    p = cfg.vehicle
    sea = _linear_deep_sea()
    dt, T, xp, z = 0.1, 300.0, 50.0, -5.0
    t_rec = dt * np.arange(int(T / dt))
    spec = estimate_spectrum(ElevationRecord(surface_elevation(sea, 0.0, t_rec), dt, 0.0),
                             relative_floor=cfg.dswp.relative_floor, band=tuple(cfg.dswp.band))
    region = predictable_region(spec, xp, T)
    a, b = region.absolute
    t = dt * np.arange(math.ceil(a / dt), math.floor(b / dt) + 1)
    truth = surface_elevation(sea, xp, t)
    pred = predict_elevation(spec, xp, t, region).values
    rel = float(np.sqrt(np.mean((pred - truth) ** 2))) / sea.significant_wave_height
    prev = predict_disturbance(spec, (xp, z, 0.0), len(t), dt, float(t[0]), p, sea.depth)
    true_load = field_wave_load(p, lambda x, zz, tt: full_kinematics(sea, x, zz, tt), xp, z, 0.0, t)
    corr = min(float(np.corrcoef(prev.loads[:, i], true_load[:, i])[0, 1]) for i in range(2))
    ok = rel <= 0.05 and corr >= 0.95
    return Check("DSWP fidelity", ok, f"elevation RMSE/Hs={rel:.4f}, min load corr={corr:.4f}")


def check_nmpc_hover(cfg: ScenarioConfig) -> Check:
    p = cfg.vehicle
    ctrl = NMPC(p, cfg.controller.nmpc.build(cfg.mission.dt))
    N = ctrl.cfg.horizon
    x = np.array([50.0, -8.0, 0.0, 0.0, 0.0, 0.0])
    refs = np.tile(x, (N + 1, 1))
    mu, sol = ctrl.step(x, refs, np.zeros((N, 3)))
    err = float(np.abs(mu - hover_force(p)).max())
    lo, hi = actuator_limits(p)
    ok = err <= 0.1 and bool(np.all(mu >= lo) and np.all(mu <= hi)) and sol.rollout_error <= 1e-6
    return Check("NMPC hover", ok, f"mu={np.round(mu, 4).tolist()}, status {sol.status}")


def check_ekf_zero_noise(cfg: ScenarioConfig) -> Check:
    p = cfg.vehicle
    zero = np.zeros((6, 6))
    ekf_cfg = EkfConfig(Q=zero, R=np.zeros((3, 3)), P0=1e-4 * np.eye(6), allow_singular=True)
    x = np.array([50.0, -8.0, 0.05, 0.1, 0.0, 0.0])
    ekf = ExtendedKalmanFilter(x, p, ekf_cfg)
    rng = np.random.default_rng(1)
    err = 0.0
    for k in range(200):
        ekf.update(x[:3])
        err = max(err, float(np.abs(ekf.x - x).max()))
        mu = rng.uniform(-20.0, 20.0, 3)
        tau = rng.normal(scale=5.0, size=3)
        x = rk4_step(x, mu, tau, 0.1, p)
        ekf.predict(mu, tau, 0.1)
    return Check("EKF zero noise", err <= 1e-6, f"max state error {err:.1e}")


CHECKS: tuple[Callable[[ScenarioConfig], Check], ...] = (
    check_dynamics_algebra, check_rk4_order, check_hover, check_round_trip,
    check_region_algebra, check_dswp_fidelity, check_nmpc_hover, check_ekf_zero_noise,
)


def run_validation(cfg: ScenarioConfig | None = None) -> list[Check]:
    cfg = cfg or ScenarioConfig()
    out = []
    for fn in CHECKS:
        try:
            out.append(fn(cfg))
        except Exception as exc:   # report, keep going
            out.append(Check(fn.__name__.removeprefix("check_"), False,
                             f"raised {type(exc).__name__}: {exc}"))
    return out
