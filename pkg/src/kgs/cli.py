"""Command line front end: ``kgs <subcommand> --config run.json --out DIR``.

Every run writes its artifacts plus ``manifest.json`` (materialized config,
config hash, seeds, library versions, emitted files).  Exit status is 0 on
success, 2 for an invalid configuration and 3 for a numerical abort; on
failure a JSON error record goes to stderr and to ``error.json``.
"""
from __future__ import annotations

import argparse
import copy
import dataclasses
import datetime as _dt
import json
import logging
import math
import platform
import sys
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import scipy
import scipy.fft as sfft

from . import __version__
from .decomposition import (
    RegularityParams,
    generate_rough_data,
    generate_rough_state,
    generate_smooth_state,
    verify_split_scaling,
)
from .driver import IntervalRecord, run_global, smoothing_study
from .evolution import NumericalAbort, StepControl, strang_integrate
from .fitting import fit_slope, geometric_mean
from .io import config_hash, write_csv, write_json, write_snapshot, write_trajectory
from .model import FirstOrderState, SecondOrderState, energy, to_first_order, to_second_order
from .probes import DISPERSIONS, SpaceTimeField, annulus_fits, bilinear_sweep, xsb_norm
from .spectral import Grid

log = logging.getLogger("kgs")

EXIT_OK, EXIT_CONFIG, EXIT_ABORT = 0, 2, 3


class ConfigError(ValueError):
    pass


GRID_SMALL = {"dim": 3, "n": 16, "length": 2 * math.pi}
GRID_LARGE = {"dim": 3, "n": 64, "length": 2 * math.pi}

DEFAULTS = {
    "simulate": {
        "grid": GRID_SMALL,
        "data": {"kind": "smooth", "seed": 0, "amplitude": 1.0, "width": 2.0,
                 "s": 0.75, "m": 0.75, "style": "random"},
        "method": "strang",
        "h": 1e-3,
        "T": 1.0,
        "coupling": 1.0,
        "sample_every": 10,
        "trajectory_every": 0,
        "N": 8.0,
        "delta": 0.05,
        "picard_tol": 1e-10,
        "picard_max_iters": 50,
    },
    "split": {
        "grid": GRID_LARGE,
        "s": 0.75,
        "l": 0.0,
        "sweep": [4, 8, 16, 32],
        "seeds": list(range(8)),
        "style": "random",
    },
    "smoothing-study": {
        "grid": GRID_LARGE,
        "s": 0.75,
        "m": 0.75,
        "delta": 0.05,
        "sweep": [4, 8, 16, 32],
        "seeds": [0],
        "h": 0.01,
        "coupling": 1.0,
        "style": "random",
        "picard_tol": 1e-10,
        "picard_max_iters": 50,
    },
    "bilinear-probe": {
        "grid": GRID_LARGE,
        "ls": [3, 4, 5],
        "ms": [2],
        "sign": 1,
        "T_w": 8.0,
        "seeds": [0],
        "phases": "coherent",
    },
    "norms": {
        "grid": GRID_SMALL,
        "data": {"s": 0.75, "seed": 0, "style": "random"},
        "evolve": "schrodinger",
        "T_w": 8.0,
        "time_samples": 0,
        "window": "hann",
        "s_values": [0.0, 0.5, 1.0],
        "b_values": [0.0, 0.5, 1.0],
        "dispersions": list(DISPERSIONS),
    },
}


# -- configuration -------------------------------------------------------------------

def _merge(defaults: dict, user: dict, where: str = "") -> dict:
    out = copy.deepcopy(defaults)
    for key, val in user.items():
        if key not in defaults:
            raise ConfigError(f"unknown config key {where}{key!r}")
        if isinstance(defaults[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config key {where}{key!r} must be an object")
            out[key] = _merge(defaults[key], val, f"{where}{key}.")
        else:
            out[key] = val
    return out


def _num(cfg: dict, key: str, positive: bool = False) -> float:
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{key!r} must be a finite number, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(f"{key!r} must be positive, got {v!r}")
    return float(v)


def _int(cfg: dict, key: str, minimum: int = 0) -> int:
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
        raise ConfigError(f"{key!r} must be an integer >= {minimum}, got {v!r}")
    return v


def _int_list(cfg: dict, key: str, min_len: int = 1) -> list:
    v = cfg[key]
    if not isinstance(v, list) or len(v) < min_len or not all(
            isinstance(x, int) and not isinstance(x, bool) for x in v):
        raise ConfigError(f"{key!r} must be a list of at least {min_len} integers, got {v!r}")
    return v


def _sweep(cfg: dict, key: str = "sweep") -> list:
    v = cfg[key]
    if not isinstance(v, list) or len(v) < 3:
        raise ConfigError(f"{key!r} needs at least 3 entries, got {v!r}")
    if any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in v):
        raise ConfigError(f"{key!r} must hold numbers")
    if any(b <= a for a, b in zip(v, v[1:])):
        raise ConfigError(f"{key!r} must be strictly increasing")
    return [float(x) for x in v]


def _grid(cfg: dict) -> Grid:
    g = cfg["grid"]
    try:
        return Grid(dim=g["dim"], n=g["n"], length=float(g["length"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid grid: {exc}") from exc


def _choice(cfg: dict, key: str, options) -> str:
    if cfg[key] not in options:
        raise ConfigError(f"{key!r} must be one of {sorted(options)}, got {cfg[key]!r}")
    return cfg[key]


def load_config(command: str, path: Optional[str], seed: Optional[int]) -> dict:
    user = {}
    if path:
        try:
            user = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config must be a JSON object")
    cfg = _merge(DEFAULTS[command], user)
    if seed is not None:
        if "seeds" in cfg:
            cfg["seeds"] = [seed]
        else:
            cfg["data"]["seed"] = seed
    return cfg


def seeds_of(cfg: dict) -> list:
    if "seeds" in cfg:
        return list(cfg["seeds"])
    return [cfg["data"]["seed"]]


# -- run bookkeeping -----------------------------------------------------------------

class Run:
    def __init__(self, out: Path, command: str, config: dict):
        self.out = out
        self.command = command
        self.config = config
        self.files: list[Path] = []

    def path(self, name: str) -> Path:
        return self.out / name

    def emit(self, *paths) -> None:
        for p in paths:
            if isinstance(p, (list, tuple)):
                self.emit(*p)
            else:
                self.files.append(Path(p))

    def manifest(self, status: str, extra: Optional[dict] = None) -> Path:
        rel = sorted({str(p.relative_to(self.out)) for p in self.files})
        payload = {
            "command": self.command,
            "status": status,
            "config": self.config,
            "config_hash": config_hash(self.config),
            "seeds": seeds_of(self.config),
            "versions": {
                "kgs": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "python": platform.python_version(),
            },
            "files": rel,
            "created": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        }
        if extra:
            payload.update(extra)
        return write_json(self.path("manifest.json"), payload)


# -- subcommands ---------------------------------------------------------------------

def _initial_state(cfg: dict, grid: Grid) -> SecondOrderState:
    d = cfg["data"]
    kind = _choice(d, "kind", {"smooth", "rough", "zero"})
    if kind == "zero":
        return SecondOrderState.zeros(grid)
    if kind == "smooth":
        return generate_smooth_state(grid, _int(d, "seed"), _num(d, "amplitude"), _num(d, "width", True))
    return generate_rough_state(grid, _num(d, "s", True), _num(d, "m", True), _int(d, "seed"),
                                _choice(d, "style", {"random", "deterministic"}))


def cmd_simulate(cfg: dict, run: Run) -> dict:
    grid = _grid(cfg)
    method = _choice(cfg, "method", {"strang", "bourgain"})
    h, T = _num(cfg, "h", True), _num(cfg, "T", True)
    coupling = _num(cfg, "coupling")
    every = _int(cfg, "sample_every", 1)
    traj_every = _int(cfg, "trajectory_every", 0)
    try:
        ctrl = StepControl(h, T, _num(cfg, "picard_tol", True), _int(cfg, "picard_max_iters", 1))
        params = (RegularityParams(cfg["data"]["s"], cfg["data"]["m"], _num(cfg, "N", True),
                                   _num(cfg, "delta", True)) if method == "bourgain" else None)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    state = _initial_state(cfg, grid)

    if method == "bourgain":
        ledger = run_global(state.psi, state.phi, state.phi_t, params, T, ctrl, coupling)
        run.emit(write_csv(run.path("ledger.csv"), [r.to_row() for r in ledger.records],
                           [f.name for f in dataclasses.fields(IntervalRecord)]))
        summary = ledger.summary()
        run.emit(write_json(run.path("ledger.json"), summary))
        if ledger.final_state is not None:
            _write_final(run, ledger.final_state)
        if ledger.aborted:
            raise NumericalAbort(ledger.abort_reason or "aborted")
        return {"intervals": len(ledger.records)}

    rows, samples = [], []
    first = to_first_order(state)

    def observe(j, t, arrays):
        if j % every == 0 or j == ctrl.steps:
            st = FirstOrderState.from_arrays(grid, *arrays, time=t)
            rows.append(energy(to_second_order(st), coupling).to_record())
            if traj_every and (j % traj_every == 0 or j == ctrl.steps):
                samples.append(st)

    final = strang_integrate(first, ctrl.step, ctrl.steps, coupling, observer=observe)
    run.emit(write_csv(run.path("timeseries.csv"), rows,
                       ["time", "mass", "energy", "kinetic_psi", "kg_energy", "coupling_term"]))
    if samples:
        run.emit(write_trajectory(run.path("trajectory"), [s.time for s in samples], samples))
    _write_final(run, to_second_order(final))
    m0, m1 = rows[0]["mass"], rows[-1]["mass"]
    return {"steps": ctrl.steps, "step": ctrl.step,
            "relative_mass_drift": abs(m1 - m0) / m0 if m0 else abs(m1)}


def _write_final(run: Run, st: SecondOrderState) -> None:
    prov = {"time": st.time, "command": run.command}
    for role, f in (("psi", st.psi), ("phi", st.phi), ("phi_t", st.phi_t)):
        run.emit(write_snapshot(run.path(f"final_{role}.kgsf"), f, role, prov))


def cmd_split(cfg: dict, run: Run) -> dict:
    grid = _grid(cfg)
    s, l = _num(cfg, "s", True), _num(cfg, "l")
    sweep = _sweep(cfg)
    seeds = _int_list(cfg, "seeds")
    style = _choice(cfg, "style", {"random", "deterministic"})
    if s > 1:
        raise ConfigError("s must lie in (0, 1]")
    per_seed, records = [], []
    for seed in seeds:
        rec = verify_split_scaling(generate_rough_data(grid, s, seed, style), s, l, sweep)
        records.append(rec)
        per_seed += [dict(r, seed=seed) for r in rec.per_N]
    rows = []
    for j, N in enumerate(sweep):
        rows.append({
            "N": N,
            "norm_low": geometric_mean([r.per_N[j]["norm_low"] for r in records]),
            "norm_high": _gm_or_zero([r.per_N[j]["norm_high"] for r in records]),
        })
    run.emit(write_csv(run.path("split.csv"), rows, ["N", "norm_low", "norm_high"]))
    run.emit(write_csv(run.path("split_seeds.csv"), per_seed, ["seed", "N", "norm_low", "norm_high"]))
    low_applies = l >= s
    key = "norm_low" if low_applies else "norm_high"
    pts = [(r["N"], r[key]) for r in rows if r[key] > 0]
    fit = fit_slope(pts) if len(pts) >= 3 else None
    summary = {
        "slope": fit.slope if fit else None,
        "intercept": fit.intercept if fit else None,
        "r2": fit.r2 if fit else None,
        "expected_slope": l - s,
        "family": key,
        "seed_slopes": [r.slope for r in records],
    }
    run.emit(write_json(run.path("split_summary.json"), summary))
    return summary


def _gm_or_zero(vals):
    return geometric_mean(vals) if all(v > 0 for v in vals) else 0.0


def cmd_smoothing_study(cfg: dict, run: Run) -> dict:
    grid = _grid(cfg)
    sweep = _sweep(cfg)
    seeds = _int_list(cfg, "seeds")
    try:
        params = RegularityParams(_num(cfg, "s", True), _num(cfg, "m", True), sweep[0],
                                  _num(cfg, "delta", True))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    report = smoothing_study(
        params, sweep, seeds, grid, _num(cfg, "h", True), _num(cfg, "coupling"),
        _choice(cfg, "style", {"random", "deterministic"}),
        _num(cfg, "picard_tol", True), _int(cfg, "picard_max_iters", 1),
    )
    cols = ["N", "seed", "length", "w_h1", "w_l2", "z_h1", "z_l2", "rough_h1_free", "ratio",
            "picard_iterations"]
    run.emit(write_csv(run.path("smoothing_cells.csv"), report.rows, cols))
    run.emit(write_csv(run.path("smoothing.csv"), report.per_N,
                       ["N", "samples", "w_h1", "w_l2", "z_h1", "rough_h1_free", "ratio"]))
    summary = report.summary()
    run.emit(write_json(run.path("smoothing_summary.json"), summary))
    return summary


def cmd_bilinear_probe(cfg: dict, run: Run) -> dict:
    grid = _grid(cfg)
    ls, ms = _int_list(cfg, "ls"), _int_list(cfg, "ms")
    seeds = _int_list(cfg, "seeds")
    sign = cfg["sign"]
    if sign not in (1, -1):
        raise ConfigError("sign must be +1 or -1")
    phases = _choice(cfg, "phases", {"coherent", "random"})
    T_w = _num(cfg, "T_w", True)
    for j in ls + ms:
        if not annulus_fits(grid, j):
            raise ConfigError(f"dyadic annulus {j} lies outside the lattice of n={grid.n}")
    sweep = bilinear_sweep(grid, ls, ms, sign, T_w, seeds, phases)
    rows = [dataclasses.asdict(r) for r in sweep.rows]
    run.emit(write_csv(run.path("bilinear.csv"), rows,
                       ["l", "m", "seed", "sign", "ratio", "bound_factor", "norm", "time_samples"]))
    summary = sweep.summary()
    run.emit(write_json(run.path("bilinear_summary.json"), summary))
    return summary


def cmd_norms(cfg: dict, run: Run) -> dict:
    grid = _grid(cfg)
    d = cfg["data"]
    field = generate_rough_data(grid, _num(d, "s", True), _int(d, "seed"),
                                _choice(d, "style", {"random", "deterministic"}))
    evolve = _choice(cfg, "evolve", set(DISPERSIONS))
    nt = _int(cfg, "time_samples", 0) or None
    if nt is not None and nt < 8:
        raise ConfigError("'time_samples' must be 0 (automatic) or >= 8")
    disps = cfg["dispersions"]
    if not isinstance(disps, list) or not disps or any(x not in DISPERSIONS for x in disps):
        raise ConfigError(f"dispersions must be a non-empty subset of {list(DISPERSIONS)}")
    window = _choice(cfg, "window", {"hann", "none"})
    stf = SpaceTimeField.free(field, evolve, _num(cfg, "T_w", True), nt, window)
    rows = []
    for disp in disps:
        for s in cfg["s_values"]:
            for b in cfg["b_values"]:
                rows.append({"dispersion": disp, "s": float(s), "b": float(b),
                             "value": xsb_norm(stf, float(s), float(b), disp)})
    run.emit(write_csv(run.path("norms.csv"), rows, ["dispersion", "s", "b", "value"]))
    summary = {"l2_norm": stf.l2_norm(), "time_samples": stf.nt, "evolve": evolve}
    run.emit(write_json(run.path("norms_summary.json"), summary))
    return summary


COMMANDS: dict[str, Callable[[dict, Run], dict]] = {
    "simulate": cmd_simulate,
    "split": cmd_split,
    "smoothing-study": cmd_smoothing_study,
    "bilinear-probe": cmd_bilinear_probe,
    "norms": cmd_norms,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kgs", description="Klein-Gordon-Schroedinger experiments")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON file; missing keys take their defaults")
        sp.add_argument("--out", default=f"runs/{name}", help="output directory")
        sp.add_argument("--seed", type=int, help="override the configured seed(s)")
        sp.add_argument("--threads", type=int, default=1, help="FFT worker threads")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def _fail(run: Optional[Run], out: Path, code: int, kind: str, message: str, reason=None) -> int:
    err = {"status": "error", "exit_code": code, "kind": kind, "message": message}
    if reason:
        err["reason"] = reason
    print(json.dumps(err), file=sys.stderr)
    try:
        out.mkdir(parents=True, exist_ok=True)
        if run is None:
            run = Run(out, "unknown", {})
        run.emit(write_json(run.path("error.json"), err))
        if run.config:
            run.manifest("error")
    except OSError:
        pass
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    run = None
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = load_config(args.command, args.config, args.seed)
        out.mkdir(parents=True, exist_ok=True)
        run = Run(out, args.command, cfg)
        with sfft.set_workers(args.threads):
            result = COMMANDS[args.command](cfg, run)
    except ConfigError as exc:
        return _fail(run, out, EXIT_CONFIG, "config", str(exc))
    except NumericalAbort as exc:
        return _fail(run, out, EXIT_ABORT, "numerical-abort", str(exc), exc.reason)
    except (ValueError, TypeError, KeyError) as exc:
        # parameter errors raised by the library before any heavy work
        return _fail(run, out, EXIT_CONFIG, "config", f"{type(exc).__name__}: {exc}")
    run.manifest("ok", {"result": result})
    print(json.dumps({"status": "ok", "out": str(out)}))
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
