"""Command-line entry point: ``bubbly1d --config run.json --command micro``.

Exit codes: 0 success, 1 solver failure or failed diagnostics,
2 configuration or I/O error.
"""
from __future__ import annotations

import argparse
from dataclasses import dataclass, field
import json
import math
from pathlib import Path
import sys

import jsonschema
import numpy as np

from . import io as bio
from .core import PhysParams, check_scaling, state_margins
from .homog import FIELDS, convergence_study
from .macro import macro_from_init, macro_run, mixture_stress, relaxation_term
from .micro import MicroStepConfig, monitor_bounds, regularity_functional, run, total_energy
from .seed import scaling_bounds_for, seed_micro

EXIT_OK, EXIT_SOLVER, EXIT_CONFIG = 0, 1, 2


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    out: Path
    base: Path
    init: Path | None
    params: PhysParams
    micro: dict = field(default_factory=dict)
    macro: dict = field(default_factory=dict)
    homog: dict = field(default_factory=dict)
    diag: dict = field(default_factory=dict)
    emit_plot_data: bool = False


MICRO_DEFAULTS = {"N": 8, "cells_per_segment": 10, "dt": 1e-3, "T": 0.1, "theta": 1.0,
                  "snapshot_every": 10, "R_ref": 1.0, "max_dt_shrink": 64}
MACRO_DEFAULTS = {"cells": 200, "T": 0.1, "snapshot_every": 10}
HOMOG_DEFAULTS = {"Ns": [8, 16, 32, 64], "T": 0.05, "h_const": 1.0, "cells_per_segment": 8,
                  "macro_cells": 400, "grid_points": 201, "workers": 1}


def load_config(args) -> RunConfig:
    path = Path(args.config)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}")
    try:
        jsonschema.validate(raw, bio.load_schema("config.schema.json"))
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid config {path}: {exc.message}")
    base = path.resolve().parent
    try:
        params = PhysParams(**raw.get("params", {}))
    except ValueError as exc:
        raise ConfigError(str(exc))
    micro = {**MICRO_DEFAULTS, **raw.get("micro", {})}
    macro = {**MACRO_DEFAULTS, **raw.get("macro", {})}
    homog = {**HOMOG_DEFAULTS, **raw.get("homog", {})}
    for key in ("N", "dt", "T"):
        v = getattr(args, key)
        if v is None:
            continue
        if key == "N":
            if v < 0:
                raise ConfigError("--N must be >= 0")
            micro["N"] = v
        else:
            if not (v > 0 or (key == "T" and v == 0)):
                raise ConfigError(f"--{key} must be positive")
            micro[key] = v
            macro[key] = v
            if key == "T":
                homog["T"] = v
    init = raw.get("init")
    out = Path(args.out) if args.out else base / "out"
    return RunConfig(
        command=args.command, out=out, base=base,
        init=(base / init) if init else None, params=params,
        micro=micro, macro=macro, homog=homog, diag=raw.get("diag", {}),
        emit_plot_data=raw.get("emit_plot_data", False),
    )


def _load_init(cfg: RunConfig):
    if cfg.init is None:
        raise ConfigError("the config does not name an init file")
    if not cfg.init.exists():
        raise ConfigError(f"init file not found: {cfg.init}")
    try:
        return bio.load_init(cfg.init)
    except (jsonschema.ValidationError, ValueError, json.JSONDecodeError) as exc:
        msg = exc.message if isinstance(exc, jsonschema.ValidationError) else str(exc)
        raise ConfigError(f"invalid init file {cfg.init}: {msg}")


def run_micro(cfg: RunConfig) -> int:
    init = _load_init(cfg)
    mc = cfg.micro
    try:
        state = seed_micro(init, mc["N"], mc["cells_per_segment"], cfg.params)
    except ValueError as exc:
        raise ConfigError(f"cannot seed N={mc['N']} bubbles: {exc}")
    step_cfg = MicroStepConfig(dt=mc["dt"], cells_per_segment=mc["cells_per_segment"],
                               theta=mc["theta"], max_dt_shrink=mc["max_dt_shrink"])
    every = mc["snapshot_every"]
    nsteps = max(0, math.ceil(mc["T"] / mc["dt"] - 1e-12))
    try:
        traj = run(state, step_cfg, mc["T"], every=every)
    except Exception as exc:  # reported with the failing time; no partial output
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    steps = [min(i * every, nsteps) for i in range(len(traj))]
    nodes, bubbles, energy = [], [], []
    for st, s in zip(steps, traj):
        nodes.extend(bio.node_rows(s, st))
        bubbles.extend(bio.bubble_rows(s, st))
        e = total_energy(s, mc["R_ref"])
        energy.append((s.time, st, e.kinetic_fluid, e.internal_fluid, e.kinetic_bubbles, e.log_bubbles,
                       e.total, e.dissipation_fluid, e.dissipation_bubbles))
    mon = monitor_bounds(traj)
    mon_cols = ("t", "step", "max_Rdot_over_R", "int_max_Rdot_over_R_sq", "min_gap", "min_radius",
                "rho_min", "rho_max", "NR_min", "NR_max", "NF_min", "NF_max", "Q4", "Q5", "regularity")
    mon_rows = []
    for i, (st, s) in enumerate(zip(steps, traj)):
        row = [mon["t"][i], st] + [mon[k][i] for k in mon_cols[2:-1]] + [regularity_functional(s)]
        mon_rows.append(row)
    out = cfg.out
    bio.write_csv(out / "nodes.csv", bio.NODE_COLUMNS, nodes)
    bio.write_csv(out / "bubbles.csv", bio.BUBBLE_COLUMNS, bubbles)
    bio.write_csv(out / "energy.csv", bio.ENERGY_COLUMNS, energy)
    bio.write_csv(out / "monitor.csv", mon_cols, mon_rows)
    margins = {k: v.margin for k, v in check_scaling(traj[-1], scaling_bounds_for(traj[0])).items()}
    bio.write_json(out / "run.json", {"command": "micro", "N": mc["N"], "steps": nsteps,
                                      "final_time": traj[-1].time, "scaling_margins": margins})
    print(f"micro: N={mc['N']} steps={nsteps} snapshots={len(traj)} -> {out}")
    return EXIT_OK


def run_macro(cfg: RunConfig) -> int:
    init = _load_init(cfg)
    mc = cfg.macro
    state = macro_from_init(init, mc["cells"], cfg.params)
    try:
        traj = macro_run(state, mc["T"], dt=mc.get("dt"), every=mc["snapshot_every"])
    except Exception as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    rows = []
    for i, s in enumerate(traj):
        sig, rt = mixture_stress(s), relaxation_term(s)
        uc = 0.5 * (s.u[:-1] + s.u[1:])
        for j in range(s.M):
            rows.append((s.time, i, j, s.centers[j], s.alpha_f[j], s.alpha_g[j], s.rho_f[j], s.rho_g[j],
                         s.f_g[j], uc[j], sig[j], rt[j]))
    bio.write_csv(cfg.out / "cells.csv", bio.MACRO_COLUMNS, rows)
    bio.write_json(cfg.out / "run.json", {"command": "macro", "cells": mc["cells"], "final_time": traj[-1].time,
                                          "integrals": traj[-1].integrals()})
    print(f"macro: cells={mc['cells']} snapshots={len(traj)} -> {cfg.out}")
    return EXIT_OK


def run_homog(cfg: RunConfig) -> int:
    init = _load_init(cfg)
    hc = cfg.homog
    c = hc["h_const"]
    try:
        rep = convergence_study(init, hc["Ns"], hc["T"], lambda N: c * N ** -0.5, cfg.params,
                                cells_per_segment=hc["cells_per_segment"], macro_cells=hc["macro_cells"],
                                grid_points=hc["grid_points"], workers=hc["workers"])
    except Exception as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    report = rep.to_dict()
    jsonschema.validate(bio._jsonable(report), bio.load_schema("report.schema.json"))
    bio.write_json(cfg.out / "report.json", report)
    rows = []
    for i, (N, h) in enumerate(zip(rep.Ns, rep.h)):
        for k in FIELDS:
            rows.append((N, h, k, rep.errors[k]["L2"][i], rep.errors[k]["Linf"][i]))
    bio.write_csv(cfg.out / "errors.csv", ("N", "h", "field", "L2", "Linf"), rows)
    flag = " (NonMonotone)" if rep.non_monotone else ""
    print(f"homog: Ns={rep.Ns}{flag} -> {cfg.out}")
    return EXIT_OK


def diagnose(snapshots, params: PhysParams) -> list[tuple[str, bool, float]]:
    """Invariant suite over reloaded snapshots: ``(name, passed, worst margin)``."""
    results = {}

    def record(name, margin):
        prev = results.get(name)
        results[name] = margin if prev is None else min(prev, margin)

    for snap in snapshots:
        margins = state_margins(snap["x"], snap["u"], snap["cell_mass"], snap["c"], snap["R"],
                                snap["c_dot"], snap["R_dot"], snap["m"], snap["kappa"], params)
        for n, v in margins.items():
            record(n, v)
        # global ordering across bubbles: x_k^+ < x_{k+1}^-
        x = snap["x"]
        gaps = x[:, -1] - x[:, 0]
        record("gap_positive", float(np.min(gaps)))
        rho = snap["cell_mass"] / np.diff(x, axis=1)
        record("density_positive", float(np.min(rho)))
    first = snapshots[0]

    def drift(a, b):
        if a.shape != b.shape:
            return -1.0
        return 0.0 if np.array_equal(a, b) else -float(np.max(np.abs(a - b)))

    for snap in snapshots[1:]:
        record("cell_mass_conservation", drift(snap["cell_mass"], first["cell_mass"]))
        record("bubble_mass_conservation", drift(snap["m"], first["m"]))
    return [(k, v >= 0, v) for k, v in results.items()]


def run_diag(cfg: RunConfig) -> int:
    directory = Path(cfg.diag.get("snapshot_dir", cfg.out))
    if not directory.is_absolute() and "snapshot_dir" in cfg.diag:
        directory = cfg.base / directory
    if not (directory / "nodes.csv").exists():
        raise ConfigError(f"no snapshot found in {directory}")
    try:
        snaps = bio.load_micro_snapshots(directory)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"unreadable snapshot in {directory}: {exc}")
    results = diagnose(snaps, cfg.params)
    for name, ok, margin in results:
        print(f"{'PASS' if ok else 'FAIL'} {name} margin={margin:.3e}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_SOLVER


COMMANDS = {"micro": run_micro, "macro": run_macro, "homog": run_homog, "diag": run_diag}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bubbly1d", description="1D bubbly-flow simulator and homogenization harness")
    ap.add_argument("--config", required=True, help="run configuration (JSON)")
    ap.add_argument("--out", help="output directory (default: <config dir>/out)")
    ap.add_argument("--command", choices=sorted(COMMANDS), default="micro")
    ap.add_argument("--N", type=int, help="override the bubble count")
    ap.add_argument("--dt", type=float, help="override the time step")
    ap.add_argument("--T", type=float, help="override the final time")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        return COMMANDS[cfg.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
