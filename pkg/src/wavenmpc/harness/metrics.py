"""Tracking and power metrics over the controlled phase of a mission."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..vehicle import wrap_angle
from .mission import MissionLog

DOF_NAMES = ("surge", "heave", "pitch")


@dataclass(frozen=True)
class MetricsReport:
    """Phase-2 summary of one mission.

    ``ratio`` is mean power divided by the normalised error ``1 / RMSE_pos``
    (W m); ``ratio_per_m`` is mean power over ``RMSE_pos`` (W/m). Both are
    reported because the intended unit is ambiguous.
    """

    rmse: tuple[float, float, float]
    max_error: tuple[float, float, float]
    rmse_position: float
    mean_power: float
    energy: float
    mean_power_elec: float
    energy_elec: float
    ratio: float
    ratio_per_m: float
    n_samples: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rmse"] = dict(zip(DOF_NAMES, self.rmse))
        d["max_error"] = dict(zip(DOF_NAMES, self.max_error))
        return d


def tracking_errors(truth_pose: np.ndarray, reference: np.ndarray) -> np.ndarray:
    e = np.asarray(truth_pose, dtype=float)[:, :3] - np.asarray(reference, dtype=float)[:, :3]
    e[:, 2] = wrap_angle(e[:, 2])
    return e


def metrics_from_arrays(truth_pose, reference, mu, nu, dt: float, k_t: float = 0.0,
                        power=None, power_elec=None) -> MetricsReport:
    e = tracking_errors(truth_pose, reference)
    if len(e) == 0:
        raise ValueError("no samples to evaluate")
    rmse = np.sqrt(np.mean(e ** 2, axis=0))
    mx = np.max(np.abs(e), axis=0)
    mu = np.asarray(mu, dtype=float)
    if power is None:
        power = np.sum(np.abs(mu * np.asarray(nu, dtype=float)), axis=1)
    if power_elec is None:
        power_elec = k_t * np.sum(np.abs(mu) ** 1.5, axis=1)
    power = np.asarray(power, dtype=float)
    power_elec = np.asarray(power_elec, dtype=float)
    rmse_pos = float(np.hypot(rmse[0], rmse[1]))
    mean_p = float(power.mean())
    return MetricsReport(
        rmse=tuple(float(v) for v in rmse),
        max_error=tuple(float(v) for v in mx),
        rmse_position=rmse_pos,
        mean_power=mean_p,
        energy=float(power.sum() * dt),
        mean_power_elec=float(power_elec.mean()),
        energy_elec=float(power_elec.sum() * dt),
        ratio=mean_p * rmse_pos,
        ratio_per_m=mean_p / rmse_pos if rmse_pos > 0 else float("inf"),
        n_samples=len(e),
    )


def compute_metrics(mlog: MissionLog) -> MetricsReport:
    """Metrics over the phase-2 rows of ``mlog`` (truth against reference)."""
    a = mlog.phase2()
    if len(a["t"]) == 0:
        raise ValueError("log has no phase-2 samples")
    return metrics_from_arrays(a["truth"][:, :3], a["reference"], a["mu"], a["truth"][:, 3:],
                               mlog.dt, power=a["power"], power_elec=a["power_elec"])


def percentage_reduction(baseline: float, improved: float) -> float:
    """``(baseline - improved) / baseline`` in percent."""
    if baseline == 0:
        return float("nan")
    return 100.0 * (baseline - improved) / baseline
