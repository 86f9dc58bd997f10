"""Command-line entry point: ``wavenmpc {run,matrix,predict,validate}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .harness.config import CONTROLLER_LABELS, CONTROLLERS, WAVE_CASES, ScenarioConfig, load_config
from .harness.diagnostics import dswp_diagnostics
from .harness.matrix import DEFAULT_CASES, run_matrix
from .harness.validate import run_validation
from .vehicle import ConfigurationError

log = logging.getLogger("wavenmpc")


def _case(value: str) -> str:
    v = value.upper()
    if v not in WAVE_CASES:
        raise argparse.ArgumentTypeError(f"unknown case {value!r}; choose from {sorted(WAVE_CASES)}")
    return v


def _controller(value: str) -> str:
    v = value.lower().replace("-", "")
    if v not in CONTROLLERS:
        raise argparse.ArgumentTypeError(f"unknown controller {value!r}; choose from {CONTROLLERS}")
    return v


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("-c", "--config", type=Path, help="scenario YAML (defaults built in when omitted)")
    p.add_argument("-o", "--out", type=Path, default=Path("results"), help="output directory")
    p.add_argument("--seed", type=int, help="override the sea seed (sensor seed follows)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wavenmpc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one case/controller cell")
    _common(p)
    p.add_argument("--case", type=_case, help="wave case (default: from config)")
    p.add_argument("--controller", type=_controller, help="cpd, ff or nmpc (default: from config)")
    p.add_argument("--max-steps", type=int, help="truncate the mission (smoke runs)")

    p = sub.add_parser("matrix", help="run the case x controller study")
    _common(p)
    p.add_argument("--case", type=_case, action="append", dest="cases",
                   help="restrict to a case (repeatable; default W1 W2 W3)")
    p.add_argument("--controller", type=_controller, action="append", dest="controllers",
                   help="restrict to a controller (repeatable; default all)")
    p.add_argument("-j", "--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--max-steps", type=int, help="truncate each mission (smoke runs)")

    p = sub.add_parser("predict", help="open-loop wave prediction diagnostics")
    _common(p)
    p.add_argument("--case", type=_case, action="append", dest="cases",
                   help="wave case (repeatable; default from config)")
    p.add_argument("--linear", action="store_true", help="use a first-order truth sea")

    p = sub.add_parser("validate", help="fast invariant suite")
    _common(p)
    return parser


def _load(args) -> ScenarioConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    return cfg


def cmd_run(args) -> int:
    cfg = _load(args)
    case = args.case or cfg.sea.case.upper()
    ctrl = args.controller or cfg.controller.name
    summary = run_matrix(cfg, [case], [ctrl], args.out, max_steps=args.max_steps)
    cell = summary.cells[0]
    _report_cell(cell)
    return 0 if summary.all_completed else 1


def cmd_matrix(args) -> int:
    cfg = _load(args)
    cases = args.cases or list(DEFAULT_CASES)
    ctrls = args.controllers or list(CONTROLLERS)
    summary = run_matrix(cfg, cases, ctrls, args.out, jobs=args.jobs, max_steps=args.max_steps)
    for cell in summary.cells:
        _report_cell(cell)
    for case, comps in summary.reductions().items():
        for name, red in comps.items():
            print(f"{case} {name}: " + ", ".join(f"{k} {v:+.1f}%" for k, v in red.items()))
    print(f"summary: {args.out / 'summary.json'} ({summary.runtime:.0f} s)")
    return 0 if summary.all_completed else 1


def cmd_predict(args) -> int:
    cfg = _load(args)
    cases = args.cases or [cfg.sea.case.upper()]
    reports = []
    for case in cases:
        rep = dswp_diagnostics(cfg.with_overrides(case=case), linear=args.linear or None,
                               out_dir=args.out)
        reports.append(rep.to_dict())
        corr = ", ".join(f"{c:.3f}" for c in rep.load_correlation)
        print(f"{case}: window [{rep.t_s:.1f}, {rep.t_f:.1f}] s, elevation RMSE/Hs "
              f"{rep.elevation_rmse_over_hs:.4f}, load corr ({corr})")
    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "predict_summary.json", "w") as fh:
        json.dump(reports, fh, indent=2)
        fh.write("\n")
    return 0


def cmd_validate(args) -> int:
    checks = run_validation(_load(args))
    for c in checks:
        print(c.line())
    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "validate.json", "w") as fh:
        json.dump([{"name": c.name, "passed": c.passed, "detail": c.detail} for c in checks],
                  fh, indent=2)
        fh.write("\n")
    return 0 if all(c.passed for c in checks) else 1


def _report_cell(cell) -> None:
    label = f"{cell.case} {CONTROLLER_LABELS[cell.controller]}"
    if cell.metrics is None:
        print(f"{label}: FAILED ({cell.failure})")
        return
    m = cell.metrics
    state = "ok" if cell.completed else f"FAILED ({cell.failure})"
    print(f"{label}: {state}, RMSE surge {m.rmse[0]:.3f} m, heave {m.rmse[1]:.3f} m, "
          f"pitch {m.rmse[2]:.3f} rad, mean power {m.mean_power:.2f} W, {cell.runtime:.0f} s")


COMMANDS = {"run": cmd_run, "matrix": cmd_matrix, "predict": cmd_predict, "validate": cmd_validate}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigurationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
