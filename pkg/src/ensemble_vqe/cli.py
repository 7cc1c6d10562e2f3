"""Batch driver for geometry scans.

Sub-commands ``fci-only``, ``adiabatic``, ``diabatic`` and ``full`` run the
pipeline over a grid of Delta z1 values on the path (dx2, dy3, dz1) and write
one JSON file per point, scan-level CSV tables and per-figure plot data.

Config files use INI syntax (all keys optional)::

    [scan]
    start = -0.30
    stop = 0.30
    step = 0.01
    dx2 = 0.1
    dy3 = 0.05

    [orbitals]
    mo = canonical            ; canonical | lowdin | diabatic
    ref_distortion = 0.1, 0.0, -0.1

    [optimizer]
    mode = penalty            ; penalty | constrained
    penalty_weight = 1.0
    spin_epsilon = 1e-8
    max_iter = 500
    f_tol = 1e-10
    repetitions = 2
    warm_start = false

    [resolve]
    solver = frobenius        ; frobenius | two-step | weighted
    weights = 3, 2, 1

    [diabat]
    route = rotation          ; rotation | constrained
    r_epsilon = 1e-8

    [run]
    jobs = 1
    out = scan-output

Command-line flags override the file; ``ENSEMBLE_VQE_OUT`` overrides the
output directory.
"""

from __future__ import annotations

import argparse
from concurrent.futures import ProcessPoolExecutor
import configparser
import csv
from dataclasses import dataclass, field, replace
import json
import logging
import os
from pathlib import Path
import sys

import numpy as np

from .geometry import Distortion, scan_grid
from .pipeline import (
    PipelineSettings,
    adiabatic_analysis,
    diabatic_analysis,
    fci_point,
    settings_dict,
    vqe_point,
)
from .resolve import assign_adiabatic_order

log = logging.getLogger(__name__)

COMMANDS = ("fci-only", "adiabatic", "diabatic", "full")
OUT_ENV = "ENSEMBLE_VQE_OUT"
R_REPORT_TOL = 1e-6
ENERGY_TOL = 1e-6


class UsageError(ValueError):
    pass


@dataclass(frozen=True)
class ScanConfig:
    command: str = "full"
    grid: tuple[float, float, float] = (-0.30, 0.30, 0.01)
    dx2: float = 0.1
    dy3: float = 0.05
    mo: str | None = None
    settings: PipelineSettings = field(default_factory=PipelineSettings)
    warm_start: bool = False
    jobs: int = 1
    out: str = "scan-output"

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}")
        if self.grid[2] <= 0 or self.grid[1] < self.grid[0]:
            raise UsageError("grid needs start <= stop and a positive step")
        if self.jobs < 1:
            raise UsageError("jobs must be positive")

    def points(self) -> np.ndarray:
        return scan_grid(*self.grid)

    def settings_for(self, analysis: str) -> PipelineSettings:
        """Adiabatic runs default to canonical orbitals, diabatic runs to diabatic ones."""
        mo = self.mo or ("diabatic" if analysis == "diabatic" else "canonical")
        return replace(self.settings, mo=mo)


def _floats(text: str, n: int, what: str) -> tuple[float, ...]:
    parts = [p for p in text.replace(":", ",").split(",") if p.strip()]
    try:
        vals = tuple(float(p) for p in parts)
    except ValueError as exc:
        raise UsageError(f"cannot parse {what} {text!r}") from exc
    if len(vals) != n:
        raise UsageError(f"{what} needs {n} numbers, got {text!r}")
    return vals


def load_config(path: str | None, overrides: dict) -> ScanConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    if path is not None:
        if not cp.read(path):
            raise UsageError(f"cannot read config file {path}")
    get = lambda sec, key, fallback: cp.get(sec, key, fallback=fallback) if cp.has_section(sec) else fallback
    try:
        grid = (
            float(get("scan", "start", -0.30)),
            float(get("scan", "stop", 0.30)),
            float(get("scan", "step", 0.01)),
        )
        weights = get("resolve", "weights", None)
        ref = get("orbitals", "ref_distortion", None)
        settings = PipelineSettings(
            mo="canonical",
            ref_distortion=_floats(ref, 3, "reference distortion") if ref else (0.1, 0.0, -0.1),
            mode=get("optimizer", "mode", "penalty"),
            penalty_weight=float(get("optimizer", "penalty_weight", 1.0)),
            spin_epsilon=float(get("optimizer", "spin_epsilon", 1e-8)),
            max_iter=int(get("optimizer", "max_iter", 500)),
            f_tol=float(get("optimizer", "f_tol", 1e-10)),
            repetitions=int(get("optimizer", "repetitions", 2)),
            solver=get("resolve", "solver", "frobenius"),
            weights=_floats(weights, 3, "weights") if weights else (3.0, 2.0, 1.0),
            route=get("diabat", "route", "rotation"),
            r_epsilon=float(get("diabat", "r_epsilon", 1e-8)),
        )
        cfg = dict(
            grid=grid,
            dx2=float(get("scan", "dx2", 0.1)),
            dy3=float(get("scan", "dy3", 0.05)),
            mo=get("orbitals", "mo", None),
            settings=settings,
            warm_start=str(get("optimizer", "warm_start", "false")).lower() in ("1", "true", "yes", "on"),
            jobs=int(get("run", "jobs", 1)),
            out=get("run", "out", "scan-output"),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    s_over = {k: overrides.pop(k) for k in list(overrides) if k in settings_dict(settings)}
    try:
        cfg["settings"] = replace(cfg["settings"], **s_over)
        cfg.update(overrides)
        if os.environ.get(OUT_ENV):
            cfg["out"] = os.environ[OUT_ENV]
        return ScanConfig(**cfg)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


# --- scan execution --------------------------------------------------------

def _run_point(task) -> dict:
    command, d, settings_by_kind, t0 = task
    if command == "fci-only":
        return fci_point(d, settings_by_kind["adiabatic"])
    rec = {"distortion": list(d.as_tuple())}
    t_out = {}
    if command in ("adiabatic", "full"):
        s = settings_by_kind["adiabatic"]
        ctx = vqe_point(d, s, t0=t0.get("adiabatic") if t0 else None)
        adiabatic_analysis(ctx, s)
        rec["adiabatic_run"] = ctx.record
        rec["fci"] = ctx.record["fci"]
        t_out["adiabatic"] = ctx.vqe.t_star
    if command in ("diabatic", "full"):
        s = settings_by_kind["diabatic"]
        ctx = vqe_point(d, s, t0=t0.get("diabatic") if t0 else None)
        diabatic_analysis(ctx, s)
        rec["diabatic_run"] = ctx.record
        rec["fci"] = ctx.record["fci"]
        t_out["diabatic"] = ctx.vqe.t_star
    rec["_t_star"] = t_out
    return rec


def _flags(rec: dict) -> list[str]:
    flags = []
    for key in ("adiabatic_run", "diabatic_run"):
        run = rec.get(key)
        if run is None:
            continue
        v = run["vqe"]
        if not v["converged"] or abs(v["ensemble_error"]) > ENERGY_TOL:
            flags.append(f"{key}: ensemble optimization not converged")
        if "adiabatic" in run and (not run["adiabatic"]["converged"] or run["adiabatic"]["max_dev_fci"] > ENERGY_TOL):
            flags.append("eigenstate resolution failed")
        if "diabatic" in run and run["diabatic"]["optimal"]["r"] > R_REPORT_TOL:
            flags.append("diabatization left r above tolerance")
    return flags


@dataclass
class ScanReport:
    config: ScanConfig
    points: list[dict]

    @property
    def failures(self) -> list[tuple[float, str]]:
        return [(p["distortion"][2], f) for p in self.points for f in p.get("flags", [])]


def run_scan(config: ScanConfig, write: bool = True) -> ScanReport:
    settings_by_kind = {k: config.settings_for(k) for k in ("adiabatic", "diabatic")}
    dists = [Distortion(config.dx2, config.dy3, float(z)) for z in config.points()]
    if config.warm_start and config.command != "fci-only":
        if config.jobs > 1:
            log.info("warm start runs the scan sequentially")
        records, prev = [], None
        for d in dists:
            rec = _run_point((config.command, d, settings_by_kind, prev))
            prev = rec["_t_star"]
            records.append(rec)
    else:
        tasks = [(config.command, d, settings_by_kind, None) for d in dists]
        if config.jobs > 1:
            with ProcessPoolExecutor(max_workers=config.jobs) as pool:
                records = list(pool.map(_run_point, tasks))
        else:
            records = [_run_point(t) for t in tasks]
    for rec in records:
        rec.pop("_t_star", None)
        rec["flags"] = _flags(rec)
    _attach_order(records)
    report = ScanReport(config, records)
    if write:
        write_outputs(report)
    return report


def _attach_order(records):
    diags = [r["adiabatic_run"]["adiabatic"]["diagonal"] for r in records if "adiabatic_run" in r]
    if not diags:
        return
    perms, _ = assign_adiabatic_order(diags)
    for r, p in zip((r for r in records if "adiabatic_run" in r), perms):
        r["adiabatic_run"]["adiabatic"]["permutation"] = list(p)


# --- outputs ---------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _offdiag(M):
    M = np.asarray(M)
    return [M[0, 1], M[0, 2], M[1, 2]]


def _entries(O):
    return list(np.asarray(O).ravel())


O_COLUMNS = [f"O_{j}{i}" for j in "ABC" for i in "ABC"]
OSTAR_COLUMNS = [f"Ostar_{j}{i}" for j in "ABC" for i in "ABC"]

FIGURES = {
    # id: (required run, header, row builder)
    "fig1b": (None, ["dz1", "E0", "E1", "E2"], lambda p: p["fci"]["E"]),
    "fig3": ("diabatic_run", ["dz1", "d", "r_before", "r_after"],
             lambda p: [p["diabatic_run"]["diabatic"]["d"], p["diabatic_run"]["diabatic"]["r"],
                        p["diabatic_run"]["diabatic"]["optimal"]["r"]]),
    "fig4a": ("adiabatic_run", ["dz1", "H_AA", "H_BB", "H_CC", "E0", "E1", "E2"],
              lambda p: list(np.diag(p["adiabatic_run"]["vqe"]["H"])) + p["fci"]["E"]),
    "fig4b": ("adiabatic_run", ["dz1", "H'_AA", "H'_BB", "H'_CC", "E0", "E1", "E2"],
              lambda p: p["adiabatic_run"]["adiabatic"]["diagonal"] + p["fci"]["E"]),
    "fig5a": ("diabatic_run", ["dz1", "H_AA", "H_BB", "H_CC", "E0", "E1", "E2"],
              lambda p: list(np.diag(p["diabatic_run"]["vqe"]["H"])) + p["fci"]["E"]),
    "fig5b": ("diabatic_run", ["dz1"] + O_COLUMNS, lambda p: _entries(p["diabatic_run"]["diabatic"]["O"])),
    "fig6a": ("diabatic_run", ["dz1", "H'_AA", "H'_BB", "H'_CC", "E0", "E1", "E2"],
              lambda p: list(np.diag(p["diabatic_run"]["diabatic"]["optimal"]["H_prime"])) + p["fci"]["E"]),
    "fig6b": ("diabatic_run", ["dz1"] + OSTAR_COLUMNS,
              lambda p: _entries(p["diabatic_run"]["diabatic"]["optimal"]["O_star"])),
    "fig7": ("diabatic_run", ["dz1", "H_AB", "H_AC", "H_BC", "H'_AB", "H'_AC", "H'_BC"],
             lambda p: _offdiag(p["diabatic_run"]["vqe"]["H"]) + _offdiag(p["diabatic_run"]["diabatic"]["optimal"]["H_prime"])),
}


def available_figures(report: ScanReport) -> list[str]:
    have = set()
    for p in report.points:
        have.update(k for k in ("adiabatic_run", "diabatic_run") if k in p)
    return [f for f, (need, _, _) in FIGURES.items() if need is None or need in have]


def emit_plotdata(report: ScanReport, figure: str, out_dir: str | Path | None = None) -> Path:
    if figure not in FIGURES:
        raise UsageError(f"unknown figure id {figure!r}; choose from {', '.join(FIGURES)}")
    need, header, build = FIGURES[figure]
    if figure not in available_figures(report):
        raise UsageError(f"figure {figure} needs a scan with the {need.split('_')[0]} analysis")
    out = Path(out_dir or report.config.out) / "plotdata"
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{figure}.csv"
    rows = [[p["distortion"][2], *build(p)] for p in report.points]
    _write_csv(path, header, rows)
    return path


def write_outputs(report: ScanReport) -> None:
    out = Path(report.config.out)
    (out / "points").mkdir(parents=True, exist_ok=True)
    for p in report.points:
        name = "dz1_{:+.4f}.json".format(p["distortion"][2])
        with open(out / "points" / name, "w", encoding="utf-8") as fh:
            json.dump(p, fh, indent=2, sort_keys=True)
    pts = report.points
    if pts and "adiabatic_run" in pts[0]:
        _write_csv(
            out / "adiabatic_scan.csv",
            ["dz1", "E0", "E1", "E2", "H_AA", "H_BB", "H_CC", "H'_AA", "H'_BB", "H'_CC",
             "max_dev_fci", "ensemble_error", "spin_deviation", "iterations", "converged", "permutation"],
            [[p["distortion"][2], *p["fci"]["E"], *np.diag(p["adiabatic_run"]["vqe"]["H"]),
              *p["adiabatic_run"]["adiabatic"]["diagonal"], p["adiabatic_run"]["adiabatic"]["max_dev_fci"],
              p["adiabatic_run"]["vqe"]["ensemble_error"], p["adiabatic_run"]["vqe"]["spin_deviation"],
              p["adiabatic_run"]["vqe"]["iterations"], p["adiabatic_run"]["vqe"]["converged"],
              " ".join(map(str, p["adiabatic_run"]["adiabatic"]["permutation"]))] for p in pts],
        )
    if pts and "diabatic_run" in pts[0]:
        _write_csv(
            out / "diabatic_scan.csv",
            ["dz1", "E0", "E1", "E2", "H'_AA", "H'_BB", "H'_CC", "H'_AB", "H'_AC", "H'_BC", "d", "r"],
            [[p["distortion"][2], *p["fci"]["E"],
              *np.diag(p["diabatic_run"]["diabatic"]["optimal"]["H_prime"]),
              *_offdiag(p["diabatic_run"]["diabatic"]["optimal"]["H_prime"]),
              p["diabatic_run"]["diabatic"]["optimal"]["d"], p["diabatic_run"]["diabatic"]["optimal"]["r"]]
             for p in pts],
        )
    for fig in available_figures(report):
        emit_plotdata(report, fig, out)


# --- command line ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ensemble-vqe", description="Three-state ensemble VQE geometry scans.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="INI configuration file")
    ap.add_argument("--grid", help="start:stop:step for dz1 in Angstrom")
    ap.add_argument("--dx2", type=float)
    ap.add_argument("--dy3", type=float)
    ap.add_argument("--mo", choices=("canonical", "lowdin", "diabatic"))
    ap.add_argument("--ref-distortion", help="dx2,dy3,dz1 of the diabatic reference geometry")
    ap.add_argument("--solver", choices=("frobenius", "two-step", "weighted"))
    ap.add_argument("--weights", help="wA,wB,wC for the weighted solver")
    ap.add_argument("--route", choices=("rotation", "constrained"))
    ap.add_argument("--mode", choices=("penalty", "constrained"))
    ap.add_argument("--warm-start", action="store_true", default=None)
    ap.add_argument("--jobs", type=int)
    ap.add_argument("--out")
    ap.add_argument("--figure", action="append", default=None,
                    help="figure id(s) to emit; all available by default")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = {"command": args.command}
    try:
        if args.grid:
            overrides["grid"] = _floats(args.grid, 3, "grid")
        if args.ref_distortion:
            overrides["ref_distortion"] = _floats(args.ref_distortion, 3, "reference distortion")
        if args.weights:
            overrides["weights"] = _floats(args.weights, 3, "weights")
        for key in ("dx2", "dy3", "mo", "solver", "route", "mode", "jobs", "out", "warm_start"):
            val = getattr(args, key)
            if val is not None:
                overrides[key] = val
        config = load_config(args.config, overrides)
        report = run_scan(config)
        if args.figure:
            for fig in args.figure:
                emit_plotdata(report, fig)
    except UsageError as exc:
        ap.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for dz, msg in report.failures:
        print(f"flagged dz1={dz:+.3f}: {msg}", file=sys.stderr)
    print(f"{len(report.points)} points written to {config.out}; {len(report.failures)} flagged")
    return 1 if report.failures else 0


if __name__ == "__main__":
    sys.exit(main())
