"""Deterministic, atomic CSV/JSON output and validated JSON input."""
from __future__ import annotations

import csv
from importlib import resources
import io
import json
import math
import os
from pathlib import Path
import tempfile

import jsonschema
import numpy as np

from .core import MicroState
from .seed import MacroInitData

NODE_COLUMNS = ("t", "step", "seg", "i", "x", "u", "rho", "cell_mass", "phase")
BUBBLE_COLUMNS = ("t", "step", "k", "c", "R", "c_dot", "R_dot", "m", "kappa")
ENERGY_COLUMNS = ("t", "step", "kinetic_fluid", "internal_fluid", "kinetic_bubbles", "log_bubbles",
                  "total", "dissipation_fluid", "dissipation_bubbles")
MACRO_COLUMNS = ("t", "step", "j", "x", "alpha_f", "alpha_g", "rho_f", "rho_g", "f_g", "u", "sigma", "relax")


def load_schema(name: str) -> dict:
    return json.loads(resources.files("bubbly1d").joinpath("schema", name).read_text())


def atomic_write_text(path, text: str) -> None:
    """Write via a temporary file in the same directory and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))  # shortest round-trip representation
    return "" if v is None else str(v)


def write_csv(path, columns, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    atomic_write_text(path, buf.getvalue())


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return [_jsonable(v) for v in o.tolist()]
    if isinstance(o, (np.bool_, bool)):
        return bool(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (float, np.floating)):
        o = float(o)
        return o if math.isfinite(o) else None
    return o


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def load_init(path) -> MacroInitData:
    """Read and strictly validate an init file."""
    with open(path) as fh:
        data = json.load(fh)
    jsonschema.validate(data, load_schema("init.schema.json"))
    return MacroInitData(
        x=np.linspace(-1.0, 1.0, len(data["rho_f0"])),
        **{k: np.asarray(data[k], dtype=float) for k in
           ("rho_f0", "rho_g0", "alpha_f0", "alpha_g0", "f_g0", "u0")},
        rho_min=data["rho_min"], alpha_min=data["alpha_min"], f_min=data["f_min"],
    )


def init_to_json(init: MacroInitData) -> dict:
    d = {k: getattr(init, k) for k in ("rho_f0", "rho_g0", "alpha_f0", "alpha_g0", "f_g0", "u0")}
    d.update(rho_min=init.rho_min, alpha_min=init.alpha_min, f_min=init.f_min)
    return _jsonable(d)


def node_rows(state: MicroState, step: int):
    N, n = state.N, state.cells_per_segment
    rho, cm = state.rho, state.cell_mass
    for s in range(N + 1):
        for i in range(n + 1):
            if (s == 0 and i == 0) or (s == N and i == n):
                phase = "wall"
            elif i == 0 or i == n:
                phase = "interface"
            else:
                phase = "fluid"
            r, m = (rho[s, i], cm[s, i]) if i < n else (None, None)
            yield (state.time, step, s, i, state.x[s, i], state.u[s, i], r, m, phase)


def bubble_rows(state: MicroState, step: int):
    for k in range(state.N):
        yield (state.time, step, k, state.c[k], state.R[k], state.c_dot[k], state.R_dot[k],
               state.m[k], state.kappa[k])


def load_micro_snapshots(directory) -> list[dict]:
    """Rebuild the raw arrays of every snapshot in ``nodes.csv``/``bubbles.csv``.

    Returns a list (ordered by step) of dicts with keys ``t``, ``step``,
    ``x``, ``u``, ``cell_mass``, ``c``, ``R``, ``c_dot``, ``R_dot``, ``m``,
    ``kappa``.  No invariant is checked here.
    """
    directory = Path(directory)
    nodes = read_csv(directory / "nodes.csv")
    bubbles = read_csv(directory / "bubbles.csv")
    steps = sorted({int(r["step"]) for r in nodes})
    out = []
    for st in steps:
        rows = [r for r in nodes if int(r["step"]) == st]
        nseg = max(int(r["seg"]) for r in rows) + 1
        npt = max(int(r["i"]) for r in rows) + 1
        x = np.full((nseg, npt), np.nan)
        u = np.full((nseg, npt), np.nan)
        cm = np.full((nseg, npt - 1), np.nan)
        for r in rows:
            s, i = int(r["seg"]), int(r["i"])
            x[s, i] = float(r["x"])
            u[s, i] = float(r["u"])
            if r["cell_mass"] != "":
                cm[s, i] = float(r["cell_mass"])
        brows = sorted((r for r in bubbles if int(r["step"]) == st), key=lambda r: int(r["k"]))
        snap = {"t": float(rows[0]["t"]), "step": st, "x": x, "u": u, "cell_mass": cm}
        for key in ("c", "R", "c_dot", "R_dot", "m", "kappa"):
            snap[key] = np.array([float(r[key]) for r in brows])
        out.append(snap)
    return out
