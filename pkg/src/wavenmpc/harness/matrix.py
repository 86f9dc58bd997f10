"""Wave case x controller study: runs every cell, writes logs and a summary."""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import CONTROLLER_LABELS, CONTROLLERS, ScenarioConfig
from .metrics import DOF_NAMES, MetricsReport, compute_metrics, percentage_reduction
from .mission import run_mission

log = logging.getLogger(__name__)

DEFAULT_CASES = ("W1", "W2", "W3")

# (improved, baseline) pairs reported as percentage RMSE reductions
COMPARISONS = (("nmpc", "ff"), ("nmpc", "cpd"), ("ff", "cpd"))


@dataclass
class CellResult:
    case: str
    controller: str
    completed: bool
    failure: Optional[str] = None
    metrics: Optional[MetricsReport] = None
    csv_path: Optional[str] = None
    runtime: float = 0.0
    phase2_rows: int = 0
    max_rollout_error: float = 0.0
    suboptimal_steps: int = 0
    min_covariance_eig: float = float("nan")   # smallest EKF covariance eigenvalue, whole mission
    max_abs_control: tuple = (0.0, 0.0, 0.0)   # per DoF, whole mission

    def to_dict(self) -> dict:
        return {
            "case": self.case,
            "controller": CONTROLLER_LABELS[self.controller],
            "completed": self.completed,
            "failure": self.failure,
            "csv": self.csv_path,
            "runtime_s": round(self.runtime, 3),
            "phase2_rows": self.phase2_rows,
            "max_rollout_error": self.max_rollout_error,
            "suboptimal_steps": self.suboptimal_steps,
            "min_covariance_eig": self.min_covariance_eig,
            "max_abs_control": list(self.max_abs_control),
            "metrics": self.metrics.to_dict() if self.metrics is not None else None,
        }


@dataclass
class MatrixSummary:
    cells: list[CellResult] = field(default_factory=list)
    runtime: float = 0.0

    def cell(self, case: str, controller: str) -> Optional[CellResult]:
        for c in self.cells:
            if c.case == case and c.controller == controller:
                return c
        return None

    @property
    def all_completed(self) -> bool:
        return all(c.completed for c in self.cells)

    @property
    def cases(self) -> list[str]:
        return list(dict.fromkeys(c.case for c in self.cells))

    def reductions(self) -> dict:
        """Per case and comparison, ``(RMSE_base - RMSE_new) / RMSE_base`` in percent per DoF."""
        out: dict = {}
        for case in self.cases:
            per_case = {}
            for new, base in COMPARISONS:
                a, b = self.cell(case, new), self.cell(case, base)
                if a is None or b is None or a.metrics is None or b.metrics is None:
                    continue
                per_case[f"{new}_vs_{base}"] = {
                    dof: percentage_reduction(b.metrics.rmse[i], a.metrics.rmse[i])
                    for i, dof in enumerate(DOF_NAMES)}
            out[case] = per_case
        return out

    def orderings(self) -> dict:
        """Per case: RMSE ordering NMPC < FF < C-PD in surge and heave, and power ordering."""
        out = {}
        for case in self.cases:
            m = {k: (self.cell(case, k).metrics if self.cell(case, k) else None) for k in CONTROLLERS}
            if any(v is None for v in m.values()):
                out[case] = None
                continue
            rmse = {dof: m["nmpc"].rmse[i] < m["ff"].rmse[i] < m["cpd"].rmse[i]
                    for i, dof in enumerate(DOF_NAMES[:2])}
            out[case] = {
                "rmse_surge": rmse["surge"],
                "rmse_heave": rmse["heave"],
                "power_mechanical": m["nmpc"].mean_power >= m["ff"].mean_power >= m["cpd"].mean_power,
                "power_electrical": (m["nmpc"].mean_power_elec >= m["ff"].mean_power_elec
                                     >= m["cpd"].mean_power_elec),
            }
        return out

    def to_dict(self) -> dict:
        return {
            "all_completed": self.all_completed,
            "runtime_s": round(self.runtime, 3),
            "cells": [c.to_dict() for c in self.cells],
            "reductions_percent": self.reductions(),
            "orderings": self.orderings(),
        }

    def write(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, allow_nan=True)
            fh.write("\n")


def cell_stem(case: str, controller: str) -> str:
    return f"{case}_{controller}"


def run_cell(cfg: ScenarioConfig, case: str, controller: str,
             out_dir: Optional[str | Path] = None, max_steps: Optional[int] = None) -> CellResult:
    """Run one mission; failures are captured in the result rather than raised."""
    cell_cfg = cfg.with_overrides(case=case, controller=controller)
    t0 = time.perf_counter()
    try:
        mlog = run_mission(cell_cfg, max_steps=max_steps)
    except Exception as exc:   # a broken cell must not stop the study
        log.exception("cell %s/%s crashed", case, controller)
        return CellResult(case, controller, False, f"{type(exc).__name__}: {exc}",
                          runtime=time.perf_counter() - t0)
    runtime = time.perf_counter() - t0
    csv_path = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        stem = cell_stem(case, controller)
        csv_path = str(out_dir / f"{stem}.csv")
        mlog.to_csv(csv_path)
        mlog.timing_to_csv(out_dir / f"{stem}_timing.csv")
    a = mlog.phase2()
    full = mlog.arrays()
    metrics = None
    failure = mlog.failure
    if len(a["t"]):
        metrics = compute_metrics(mlog)
    elif failure is None:
        failure = "no phase-2 samples"
    return CellResult(case, controller, failure is None, failure, metrics, csv_path, runtime,
                      phase2_rows=len(a["t"]),
                      max_rollout_error=float(a["rollout_error"].max(initial=0.0)),
                      suboptimal_steps=sum(s in ("suboptimal", "qp_failure") for s in mlog.status),
                      min_covariance_eig=float(full["covariance_min_eig"].min(initial=np.inf)),
                      max_abs_control=tuple(float(v) for v in
                                            np.abs(full["mu"]).max(axis=0, initial=0.0)))


def _run_cell_args(args):
    return run_cell(*args)


def run_matrix(cfg: ScenarioConfig, cases: Sequence[str] = DEFAULT_CASES,
               controllers: Sequence[str] = CONTROLLERS, out_dir: Optional[str | Path] = None,
               jobs: int = 1, max_steps: Optional[int] = None) -> MatrixSummary:
    """Run every (case, controller) cell.

    Cells are independent; with ``jobs > 1`` they run in worker processes.
    Each cell writes ``<case>_<controller>.csv`` (plus a solver timing CSV)
    into ``out_dir`` and ``summary.json`` is written at the end.
    """
    t0 = time.perf_counter()
    tasks = [(cfg, case, ctrl, out_dir, max_steps) for case in cases for ctrl in controllers]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_run_cell_args, tasks))
    else:
        cells = []
        for task in tasks:
            log.info("running %s / %s", task[1], CONTROLLER_LABELS[task[2]])
            cells.append(run_cell(*task))
    summary = MatrixSummary(cells, time.perf_counter() - t0)
    if out_dir is not None:
        summary.write(Path(out_dir) / "summary.json")
    return summary
