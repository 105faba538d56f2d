"""Command-line interface.

Every subcommand reads a TOML config (a path, or ``preset:NAME`` for a bundled
one), writes ``<out>/<command>.csv`` plus a ``<command>.json`` sidecar, and
exits with 0 on success, 2 on a config error, 3 on a numerical failure and 64
on bad usage.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import limits as lim
from . import moments as mom
from . import schedule as sch
from . import spectral as spc
from .config import check_run_keys, dump_config, load_config, load_document, membrane_setup
from .linearize import LinearizedSystem, linearized_system
from .membrane import ResolutionError
from .model import ConfigError, NumericalError, drive_strengths

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2, 3, 64
COMMANDS = ("steady", "evolve", "eigen", "limits", "membrane", "schedule", "sweep")


class UsageError(Exception):
    pass


class GoldenSchemaError(ValueError):
    pass


@dataclass
class Table:
    columns: list
    rows: list


@dataclass
class RunReport:
    subcommand: str
    config_echo: str
    tables: dict = field(default_factory=dict)  # name -> Table; "data" is the main one
    summary: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def to_json(self, include_tables: bool = False) -> dict:
        out = {"subcommand": self.subcommand, "config": self.config_echo, "summary": self.summary,
               "flags": self.flags, "wall_time": self.wall_time}
        if include_tables:
            out["tables"] = {k: {"columns": t.columns, "rows": t.rows} for k, t in self.tables.items()}
        return out


# -- output -------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    return f"{float(x):.17g}"


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, complex):
        return {"re": x.real, "im": x.imag}
    return x


def write_report(report: RunReport, out: Path, fmt: str) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt == "csv":
        for name, tab in report.tables.items():
            path = out / (f"{report.subcommand}.csv" if name == "data" else f"{report.subcommand}_{name}.csv")
            with open(path, "w", newline="") as fh:
                fh.write(",".join(tab.columns) + "\n")
                for row in tab.rows:
                    fh.write(",".join(_fmt(v) for v in row) + "\n")
            written.append(path)
    path = out / f"{report.subcommand}.json"
    with open(path, "w") as fh:
        json.dump(_jsonable(report.to_json(include_tables=fmt == "json")), fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(path)
    return written


# -- golden comparison --------------------------------------------------------

def _flatten(obj, prefix=""):
    out = {}
    if isinstance(obj, dict):
        for k, v in obj.items():
            out.update(_flatten(v, f"{prefix}.{k}" if prefix else str(k)))
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            out.update(_flatten(v, f"{prefix}[{i}]"))
    else:
        out[prefix] = obj
    return out


def compare_against_golden(report: dict, golden: dict, tolerance=0.0):
    """Per-quantity comparison of a report summary with a golden file.

    ``golden`` holds ``{"quantities": {...}, "tolerances": {...}}``; nested
    values are flattened to dotted names. The error is relative, or absolute
    where the golden value is zero. A per-quantity tolerance overrides the
    default ``tolerance``.

    Returns ``(rows, passed)`` with rows ``(name, value, golden, error, tol, ok)``.
    """
    if not isinstance(golden, dict) or "quantities" not in golden:
        raise GoldenSchemaError("golden file needs a 'quantities' table")
    want = _flatten(golden["quantities"])
    have = _flatten(report.get("summary", report))
    tols = golden.get("tolerances", {})
    missing = sorted(k for k in want if k not in have)
    if missing:
        raise GoldenSchemaError(f"report lacks quantities {missing}")
    rows, passed = [], True
    for name in sorted(want):
        g, v = want[name], have[name]
        if isinstance(g, (bool, str)) or g is None:
            ok = v == g
            err = 0.0 if ok else math.inf
        else:
            if isinstance(v, (bool, str)) or v is None:
                raise GoldenSchemaError(f"{name}: expected a number, report has {v!r}")
            err = abs(v - g) / abs(g) if g != 0 else abs(v - g)
            ok = None
        tol = float(tols.get(name, tolerance))
        ok = err <= tol if ok is None else ok
        passed &= bool(ok)
        rows.append((name, v, g, err, tol, bool(ok)))
    return rows, passed


# -- helpers ------------------------------------------------------------------

def _grid(spec, steps, where):
    """Grid from a {start, stop, points, scale} table; ``steps`` overrides points."""
    if not isinstance(spec, dict):
        raise ConfigError(f"run.{where}: expected a table with start, stop, points")
    extra = set(spec) - {"start", "stop", "points", "scale"}
    if extra:
        raise ConfigError(f"run.{where}: unknown keys {sorted(extra)}")
    try:
        a, b = float(spec["start"]), float(spec["stop"])
    except KeyError as exc:
        raise ConfigError(f"run.{where}: missing {exc.args[0]}") from None
    n = int(steps or spec.get("points", 50))
    if n < 1:
        raise ConfigError(f"run.{where}: need at least one point")
    scale = spec.get("scale", "linear")
    if scale == "log":
        if a <= 0 or b <= 0:
            raise ConfigError(f"run.{where}: log grid needs positive bounds")
        return np.geomspace(a, b, n)
    if scale != "linear":
        raise ConfigError(f"run.{where}.scale: 'linear' or 'log'")
    return np.linspace(a, b, n)


@dataclass
class Prepared:
    cfg: object
    ls: LinearizedSystem  # kappa units
    n_th: float
    rate_unit: float  # config rate units per kappa unit


def _prepare(cfg, tol=None) -> Prepared:
    unit = 1.0
    if cfg.units.system == "si":
        unit = cfg.optical[0].linewidth
        cfg = cfg.to_kappa()
    ls = linearized_system(cfg) if tol is None else linearized_system(cfg, rtol=tol)
    return Prepared(cfg, ls, cfg.thermal_occupancy(), unit)


def _directions(p: Prepared) -> LinearizedSystem:
    """Coupling rows of the config as directions; detunings taken as effective."""
    c = p.cfg
    return LinearizedSystem(c.bare_detunings, c.kappas, c.omegas, c.gammas, np.array(c.coupling.values))


def _occupancy_columns(N):
    return [f"n_{j + 1}" for j in range(N)] + [f"n_damp_{i + 1}" for i in range(N)] + ["n_tot"]


def _occupancy_row(state, ls):
    n, tot = mom.phonon_numbers(state)
    P, _ = spc.dissipation_matrix(ls)
    _, coeff = spc.damping_modes(P)
    damp = [mom.hybrid_occupancy(state, e / np.linalg.norm(e)) for e in coeff]
    return [*n, *damp, tot]


def _analytic_rows(ls: LinearizedSystem, n_th: float, numeric: float):
    """(name, value, valid) for every analytic limit that applies to ``ls``."""
    rows = []
    per, total = drive_strengths(ls.couplings, ls.kappas)
    gam = float(np.mean(ls.gammas))
    kap = float(np.mean(ls.kappas))
    wbar = float(np.mean(ls.omegas))
    split = float(np.ptp(ls.omegas))
    flags = lim.regime_flags(gam, total, kap, split, wbar)
    uniform = np.allclose(ls.gammas, gam) and np.allclose(ls.kappas, kap)
    if ls.M == 2 and ls.N == 2 and uniform and np.isclose(per[0], per[1]):
        theta = spc.two_mode_angle(*ls.couplings)
        rows.append(("weak_coupling_two_mode", lim.weak_coupling_two_mode(gam, total, theta, split, n_th),
                     flags["weak_coupling"]))
        rows.append(("weak_coupling_degenerate", lim.weak_coupling_two_mode_degenerate(gam, total, theta, n_th),
                     flags["weak_coupling"] and flags["degenerate"]))
        rows.append(("classical_two_mode", lim.classical_limit_two_mode(gam, kap, total, theta, n_th),
                     bool(split < lim.MARGIN * gam + lim.MARGIN * total)))
    if ls.M == ls.N and uniform:
        try:
            rows.append(("weak_coupling_general", lim.weak_coupling_general(ls.couplings, ls.kappas, gam, n_th),
                         flags["weak_coupling"] and flags["degenerate"]))
            Gk, th = lim.strengths_and_angles(ls.couplings, ls.kappas)
            rows.append(("limit_by_angles", lim.limit_by_angles(Gk, th, gam, n_th),
                         flags["weak_coupling"] and flags["degenerate"]))
        except lim.DarkModeError:
            rows.append(("weak_coupling_general", math.inf, False))
    for j in range(ls.N):
        try:
            q = lim.quantum_limit(ls.couplings[:, j], ls.detunings, ls.kappas, wbar).occupancy
            rows.append((f"quantum_limit_{j + 1}", q, flags.get("resolved_sideband", False)))
        except lim.HeatingError:
            rows.append((f"quantum_limit_{j + 1}", math.inf, False))
    rows.insert(0, ("numeric", numeric, True))
    return rows, flags


# -- subcommands --------------------------------------------------------------

def cmd_steady(cfg, run, args) -> RunReport:
    check_run_keys(run, {"strengths"}, "steady")
    p = _prepare(cfg, args.tol)
    rep = RunReport("steady", dump_config(cfg))
    if "strengths" in run:
        grid = _grid(run["strengths"], args.steps, "strengths") / p.rate_unit
        states = sch.strength_sweep(_directions(p), p.n_th, grid, args.threads)
        rows = []
        for s, st in zip(grid, states):
            ls = _directions(p).with_couplings(
                sch.scale_rows(p.cfg.coupling.values, p.cfg.kappas, np.full(p.ls.M, s / p.ls.M)))
            rows.append([s * p.rate_unit, *_occupancy_row(st, ls)])
        rep.tables["data"] = Table(["Gamma"] + _occupancy_columns(p.ls.N), rows)
        rep.summary = {"points": len(rows), "n_th": p.n_th}
        return rep
    st = mom.steady_state(p.ls, p.n_th)
    row = _occupancy_row(st, p.ls)
    _, total = drive_strengths(p.ls.couplings, p.ls.kappas)
    rep.tables["data"] = Table(["Gamma"] + _occupancy_columns(p.ls.N), [[total * p.rate_unit, *row]])
    analytic, flags = _analytic_rows(p.ls, p.n_th, row[-1])
    rep.summary = {"n_th": p.n_th, "n_tot": row[-1], "n_tot_over_n_th": row[-1] / p.n_th if p.n_th else None,
                   "occupancies": row[:p.ls.N], "analytic": {n: v for n, v, _ in analytic}}
    rep.flags = flags
    return rep


def cmd_evolve(cfg, run, args) -> RunReport:
    check_run_keys(run, {"t_end", "dt", "record_every", "fit"}, "evolve")
    p = _prepare(cfg, args.tol)
    # times in the config's units; 1/kappa inside
    t_end = float(run.get("t_end", 400.0)) * p.rate_unit
    dt = float(run["dt"]) * p.rate_unit if "dt" in run else mom.default_time_step(p.ls)
    every = int(run.get("record_every", max(1, int(round(0.1 / dt)))))
    gen = mom.build_generator(p.ls, p.n_th)
    ss = mom.steady_state(p.ls, p.n_th)
    traj = mom.evolve_moments(gen, mom.MomentState.thermal(p.ls.M, p.ls.N, p.n_th), t_end, dt, every)
    n = traj.phonon_numbers()
    tot = n.sum(axis=1)
    rep = RunReport("evolve", dump_config(cfg))
    rep.tables["data"] = Table(["t"] + [f"n_{j + 1}" for j in range(p.ls.N)] + ["n_tot"],
                               [[t / p.rate_unit, *nn, s] for t, nn, s in zip(traj.times, n, tot)])
    n_ss = mom.phonon_numbers(ss)[1]
    rep.summary = {"n_ss": n_ss, "n_final": float(tot[-1]),
                   "final_deviation": float(np.max(np.abs(traj.vectors[-1] - ss.vector)))}
    if run.get("fit", True):
        r1, r2, A, B = mom.fit_double_exponential(traj.times, tot, n_ss)
        u = p.rate_unit
        rep.summary.update({"fast_rate": r1 * u, "slow_rate": r2 * u, "fast_amplitude": A, "slow_amplitude": B})
        P, _ = spc.dissipation_matrix(p.ls)
        rates, _ = spc.damping_modes(P)
        rep.summary["predicted_rates"] = list((2 * rates + np.mean(p.ls.gammas)) * u)
    return rep


def cmd_eigen(cfg, run, args) -> RunReport:
    check_run_keys(run, {"strengths"}, "eigen")
    p = _prepare(cfg, args.tol)
    grid = _grid(run.get("strengths", {"start": 1e-5, "stop": 10.0, "points": 400, "scale": "log"}),
                 args.steps, "strengths") / p.rate_unit
    base = _directions(p)
    sweep = spc.sweep_strength(base, grid, args.threads)
    eps = spc.find_exceptional_points(base, grid)
    K = base.M + base.N
    cols = ["Gamma"] + [c for i in range(K) for c in (f"re_{i + 1}", f"im_{i + 1}", f"photonic_{i + 1}")]
    rows = []
    for s, ev, wt in zip(grid, sweep.eigenvalues, sweep.photonic_weight):
        row = [s * p.rate_unit]
        for z, w in zip(ev, wt):
            row += [z.real * p.rate_unit, z.imag * p.rate_unit, w]
        rows.append(row)
    rep = RunReport("eigen", dump_config(cfg))
    rep.tables["data"] = Table(cols, rows)
    rep.tables["exceptional_points"] = Table(
        ["Gamma", "re", "im", "distance", "branch_a", "branch_b"],
        [[e.strength * p.rate_unit, e.eigenvalue.real * p.rate_unit, e.eigenvalue.imag * p.rate_unit,
          e.distance * p.rate_unit, e.branches[0], e.branches[1]] for e in eps])
    rep.summary = {"exceptional_points": [e.strength * p.rate_unit for e in eps],
                   "ties": sum(len(r.ties) for r in sweep.reports)}
    return rep


def cmd_limits(cfg, run, args) -> RunReport:
    check_run_keys(run, set(), "limits")
    p = _prepare(cfg, args.tol)
    st = mom.steady_state(p.ls, p.n_th)
    numeric = mom.phonon_numbers(st)[1]
    rows, flags = _analytic_rows(p.ls, p.n_th, numeric)
    rep = RunReport("limits", dump_config(cfg))
    rep.tables["data"] = Table(["quantity", "value", "ratio_to_numeric", "valid"],
                               [[n, v, v / numeric if numeric else math.nan, str(ok).lower()] for n, v, ok in rows])
    rep.summary = {n: v for n, v, _ in rows}
    rep.flags = flags
    return rep


def cmd_membrane(doc, args) -> RunReport:
    if "membrane" not in doc:
        raise ConfigError("missing sections: membrane")
    extra = set(doc) - {"membrane", "bath", "units", "run"}
    if extra:
        raise ConfigError(f"membrane: sections {sorted(extra)} are not used")
    tab = dict(doc["membrane"])
    quad = {}
    if args.tol is not None:
        quad["atol"] = args.tol
    setup = membrane_setup(tab)
    table = setup.table(args.threads, **quad).values.real
    labels = [f"W_{m}_{n}" for m, n in setup.modes]
    spots = setup.gaussian_spots()
    rep = RunReport("membrane", repr(setup))
    rep.tables["data"] = Table(["x0", "y0"] + labels,
                               [[s.x0, s.y0, *row] for s, row in zip(spots, table)])
    rep.summary = {"constants": setup.constants(), "table": table.tolist(), "table_abs": np.abs(table).tolist()}
    return rep


def _protocol(run, drives, rate_unit, base_dir, steps):
    if "protocol" in run:
        path = Path(run["protocol"])
        proto = sch.load_protocol(path if path.is_absolute() else base_dir / path)
    elif "segments" in run:
        proto = sch.DriveProtocol(tuple(sch.Segment(tuple(t), int(run.get("steps", 1)))
                                        for t in run["segments"]))
    else:
        mode = run.get("mode", "sequential")
        strength = run.get("strength")
        if strength is None:
            raise ConfigError("run: give protocol, segments, or strength")
        order = [k - 1 for k in run["order"]] if "order" in run else None
        if mode == "sequential":
            proto = sch.DriveProtocol.sequential(float(strength), drives, int(run.get("steps", 1)), order)
        elif mode == "simultaneous":
            proto = sch.DriveProtocol.simultaneous(float(strength), drives, int(run.get("steps", 1)))
        else:
            raise ConfigError("run.mode: 'sequential' or 'simultaneous'")
    if steps:
        proto = proto.with_steps(steps)
    return sch.DriveProtocol(tuple(sch.Segment(tuple(np.array(s.targets) / rate_unit), s.steps)
                                   for s in proto.segments))


def cmd_schedule(cfg, run, args) -> RunReport:
    check_run_keys(run, {"protocol", "segments", "steps", "mode", "strength", "order", "compare"}, "schedule")
    p = _prepare(cfg, args.tol)
    base = _directions(p)
    proto = _protocol(run, base.M, p.rate_unit, args.config_dir, args.steps)
    res = sch.quasi_static_run(base, p.n_th, proto, args.threads)
    rec = res.records
    cols = (["step", "segment"] + [f"Gamma_{k + 1}" for k in range(base.M)]
            + [f"n_schmidt_{j + 1}" for j in range(base.N)] + ["n_tot"])
    rows = [[r.step, r.segment, *(r.strengths * p.rate_unit), *r.occupancies, r.total] for r in rec]
    rep = RunReport("schedule", dump_config(cfg))
    rep.tables["data"] = Table(cols, rows)
    rep.summary = {"n_th": p.n_th, "schmidt_rank": res.rank,
                   "plateaus": [r.total for r in res.segment_ends()],
                   "final_schmidt": list(res.final.occupancies), "final_total": res.final.total}
    if "compare" in run:
        other = _protocol({**run, "mode": run["compare"]}, base.M, p.rate_unit, args.config_dir, args.steps)
        cmp_ = sch.path_independence_check(base, p.n_th, proto, other, threads=args.threads)
        rep.summary["path_independence"] = {"other_total": cmp_.total_b,
                                            "relative_difference": cmp_.relative_difference,
                                            "passed": cmp_.passed}
    return rep


def cmd_sweep(cfg, run, args) -> RunReport:
    kind = run.get("kind", "detuning")
    rep = RunReport("sweep", dump_config(cfg))
    if kind == "detuning":
        check_run_keys(run, {"kind", "drive", "detunings"}, "sweep")
        p = _prepare(cfg, args.tol)
        k = int(run.get("drive", 1)) - 1
        if not 0 <= k < p.ls.M:
            raise ConfigError(f"run.drive: must be between 1 and {p.ls.M}")
        grid = _grid(run.get("detunings", {}), args.steps, "detunings") / p.rate_unit
        curve = sch.detuning_sweep(p.ls, p.n_th, k, grid, threads=args.threads)
        name = f"delta_{k + 1}"
        rep.summary = {"argmin": curve.argmin * p.rate_unit, "minimum": curve.minimum,
                       "argmin_offset": (curve.argmin - float(np.mean(p.ls.omegas))) * p.rate_unit}
        scale = p.rate_unit
    elif kind == "contrast":
        check_run_keys(run, {"kind", "contrasts", "kappa_ratio", "gamma_ratio", "coupling_sum", "theta"}, "sweep")
        if cfg.units.system != "kappa":
            raise ConfigError("contrast sweeps are defined in kappa units")
        if cfg.N != 2:
            raise ConfigError("contrast sweeps need two mechanical modes")
        om = cfg.omegas
        grid = _grid(run.get("contrasts", {"start": -1.0, "stop": 1.0, "points": 41}), args.steps, "contrasts")
        curve = sch.contrast_sweep(
            grid, cfg.thermal_occupancy(), float(run.get("kappa_ratio", 1.0)), float(run.get("gamma_ratio", 1.0)),
            args.threads, coupling_sum=float(run.get("coupling_sum", 0.5)),
            theta=float(run.get("theta", math.pi / 4)), mean_frequency=float(np.mean(om)),
            splitting=float(np.ptp(om)), gamma=float(cfg.gammas[0]))
        name = "contrast"
        rep.summary = {"argmin": curve.argmin, "minimum": curve.minimum}
        scale = 1.0
    else:
        raise ConfigError("run.kind: 'detuning' or 'contrast'")
    rep.tables["data"] = Table([name, "n_tot"], [[x * scale, y] for x, y in zip(curve.parameter, curve.total)])
    return rep


HANDLERS = {"steady": cmd_steady, "evolve": cmd_evolve, "eigen": cmd_eigen, "limits": cmd_limits,
            "schedule": cmd_schedule, "sweep": cmd_sweep}


# -- entry point --------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise UsageError(message)


def preset_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("darkcool.presets").iterdir() if p.name.endswith(".toml"))


def resolve_config(name: str) -> Path:
    if name.startswith("preset:"):
        key = name.split(":", 1)[1]
        if key not in preset_names():
            raise ConfigError(f"unknown preset {key!r}; available: {', '.join(preset_names())}")
        return Path(str(resources.files("darkcool.presets") / f"{key}.toml"))
    return Path(name)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="darkcool", description="Multimode optomechanical cooling simulator.")
    parser.add_argument("--list-presets", action="store_true", help="print bundled config names and exit")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("config", help="config file, or preset:NAME")
        sp.add_argument("--out", default=".", help="output directory (default: current)")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        sp.add_argument("--steps", type=int, default=None, help="sweep resolution / ramp steps")
        sp.add_argument("--tol", type=float, default=None, help="solver tolerance override")
        sp.add_argument("--threads", type=int, default=os.cpu_count(), help="worker threads")
    cp = sub.add_parser("compare")
    cp.add_argument("report", help="JSON report written by another subcommand")
    cp.add_argument("golden", help="golden JSON file")
    cp.add_argument("--tol", type=float, default=0.0, help="default relative tolerance")
    return parser


def _run_compare(args) -> int:
    try:
        with open(args.report) as fh:
            report = json.load(fh)
        with open(args.golden) as fh:
            golden = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        rows, passed = compare_against_golden(report, golden, args.tol)
    except GoldenSchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print("quantity,value,golden,error,tolerance,status")
    for name, v, g, err, tol, ok in rows:
        print(f"{name},{_fmt(v) if not isinstance(v, str) else v},{_fmt(g) if not isinstance(g, str) else g},"
              f"{err:.3e},{tol:g},{'pass' if ok else 'FAIL'}")
    return EXIT_OK if passed else EXIT_FAIL


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError:
        return EXIT_USAGE
    if args.list_presets:
        print("\n".join(preset_names()))
        return EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    if args.command == "compare":
        return _run_compare(args)
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    t0 = time.perf_counter()
    try:
        path = resolve_config(args.config)
        args.config_dir = path.parent
        if args.command == "membrane":
            report = cmd_membrane(load_document(path), args)
        else:
            cfg, run = load_config(path, args.threads)
            report = HANDLERS[args.command](cfg, run, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, ResolutionError, np.linalg.LinAlgError, lim.DarkModeError, lim.HeatingError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    report.wall_time = time.perf_counter() - t0
    for p in write_report(report, Path(args.out), args.format):
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
