"""Command-line runner and experiment harness.

Examples::

    platoon-cascade run --config scenarios/i210.toml --seed 7 --out out/run
    platoon-cascade baseline --config scenarios/i210.toml --out out/base
    platoon-cascade sweep --config scenarios/single_junction.toml \\
        --variable threshold_all --values 0,5,10,15,20,25 --replications 5
    platoon-cascade grid --config scenarios/i210.toml --junction-a 3 --junction-b 4 \\
        --values-a 5,10,15,20,25 --values-b 5,10,15,20,25
    platoon-cascade analytic --fixture reference --d1 1000 --d2 1000 --v0 20

Every CSV starts with a ``# platoon-cascade v<schema>`` comment line.
Exit codes: 0 ok, 1 invariant violation, 2 configuration or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from platoon_cascade.config import apply_overrides, build_scenario, junction_ids, load_raw, tomllib
from platoon_cascade.coordination import ASSIGNMENT_LOG_FIELDS
from platoon_cascade.engine import SUMMARY_FIELDS, ConfigInvalid, InvariantViolation, run, summarize
from platoon_cascade.fuel import FIXTURES, HeadwayTooLarge, FuelModel, cost_table, optimal_threshold_analytic

CSV_SCHEMA = 1
CSV_COMMENT = f"# platoon-cascade v{CSV_SCHEMA}"

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG = 0, 1, 2

VARIABLES = ("threshold_all", "threshold_at", "d1_all", "d2_tail", "cav_ratio", "background_ratio")
TRIP_FIELDS = (
    "vehicle_id", "class", "origin", "destination", "scheduled_s", "entered_s", "exited_s",
    "distance_m", "fuel_d1_mL", "fuel_post_mL", "fuel_total_mL", "time_platooned_s",
)
EVENT_FIELDS = ("t", "event_kind", "vehicle", "junction", "payload")


class UnknownJunction(ConfigInvalid):
    pass


class CellFailed(RuntimeError):
    def __init__(self, cell: str, cause: BaseException):
        super().__init__(f"{cell}: {type(cause).__name__}: {cause}")
        self.cause = cause


# -- CSV helpers -------------------------------------------------------------

def format_csv(fields: Sequence[str], rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    buf.write(CSV_COMMENT + "\n")
    w = csv.DictWriter(buf, fieldnames=list(fields), lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for row in rows:
        w.writerow(row)
    return buf.getvalue()


def write_csv(path: Path, fields: Sequence[str], rows: Iterable[dict]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_csv(fields, rows))
    return path


def read_csv(path: str | Path) -> list[dict]:
    """Rows of a CSV written by this tool (the schema comment is checked)."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# platoon-cascade v"):
        raise ValueError(f"{path}: missing schema comment line")
    return list(csv.DictReader(lines[1:]))


# -- single runs ---------------------------------------------------------------

def _scenario_raw(config: str | Path, overrides: Sequence[str], seed: int | None, event_log: bool) -> dict:
    raw = apply_overrides(load_raw(config), overrides)
    extra = []
    if seed is not None:
        extra.append(("simulation.seed", int(seed)))
    if event_log:
        extra.append(("simulation.event_log", True))
    return apply_overrides(raw, extra)


def _force_baseline(raw: dict) -> dict:
    return apply_overrides(raw, [(f"junction.{j}.threshold_s", 0.0) for j in junction_ids(raw)])


def _run_and_write(raw: dict, out: Path, prefix: str) -> dict:
    cfg = build_scenario(raw)
    res = run(cfg)
    row = {"scenario": cfg.name, "seed": cfg.seed, **summarize(res)}
    write_csv(out / f"{prefix}summary.csv", ("scenario", "seed", *SUMMARY_FIELDS), [row])
    write_csv(out / f"{prefix}assignments.csv", ASSIGNMENT_LOG_FIELDS, res.assignment_rows())
    write_csv(out / f"{prefix}trips.csv", TRIP_FIELDS, res.trips)
    if cfg.event_log:
        (out / f"{prefix}events.jsonl").write_text("".join(line + "\n" for line in res.event_lines()))
    return row


def cmd_run(config, overrides=(), seed=None, out="out", event_log=False) -> dict:
    raw = _scenario_raw(config, overrides, seed, event_log)
    return _run_and_write(raw, Path(out), "")


def cmd_baseline(config, overrides=(), seed=None, out="out", event_log=False) -> dict:
    raw = _force_baseline(_scenario_raw(config, overrides, seed, event_log))
    return _run_and_write(raw, Path(out), "baseline_")


# -- sweeps ----------------------------------------------------------------------

@dataclass(frozen=True)
class SweepSpec:
    config: str
    variable: str
    values: tuple[float, ...]
    replications: int = 5
    junction: int | None = None
    seed: int | None = None
    overrides: tuple[str, ...] = ()

    def __post_init__(self):
        if self.variable not in VARIABLES:
            raise ConfigInvalid(f"unknown sweep variable {self.variable!r}; choose from {VARIABLES}")
        if self.variable == "threshold_at" and self.junction is None:
            raise ConfigInvalid("threshold_at needs a junction id")
        if not self.values:
            raise ConfigInvalid("sweep values must be non-empty")
        if self.replications < 1:
            raise ConfigInvalid("replications must be >= 1")


def variable_overrides(raw: dict, variable: str, value: float, junction: int | None = None) -> list:
    jids = junction_ids(raw)
    if variable == "threshold_all":
        return [(f"junction.{j}.threshold_s", float(value)) for j in jids]
    if variable == "threshold_at":
        if junction not in jids:
            raise UnknownJunction(f"unknown junction {junction}")
        return [(f"junction.{junction}.threshold_s", float(value))]
    if variable == "d1_all":
        return [(f"junction.{j}.d1_m", float(value)) for j in jids]
    if variable == "d2_tail":
        last = max(float(raw["junction"][str(j)]["position_m"]) for j in jids)
        return [("corridor.mainline_length_m", last + float(value))]
    if variable in ("cav_ratio", "background_ratio"):
        return [(f"demand.{variable}", float(value))]
    raise ConfigInvalid(f"unknown sweep variable {variable!r}")


def base_seed(raw: dict, seed: int | None) -> int:
    return int(seed) if seed is not None else int(raw.get("simulation", {}).get("seed", 0))


def _cell(args) -> dict:
    raw, label, extra = args
    try:
        return summarize(run(build_scenario(apply_overrides(raw, extra))))
    except Exception as exc:  # noqa: BLE001 - re-raised with the cell attached
        raise CellFailed(label, exc) from exc


def _map_cells(jobs: list, workers: int) -> list[dict]:
    if workers <= 1 or len(jobs) <= 1:
        return [_cell(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map() yields in submission order, so output order is deterministic.
        return list(pool.map(_cell, jobs))


def cmd_sweep(spec: SweepSpec, out: str | Path | None = "out", workers: int = 1) -> list[dict]:
    """One run per (value, seed); rows sorted by (value, seed)."""
    raw = apply_overrides(load_raw(spec.config), spec.overrides)
    seed0 = base_seed(raw, spec.seed)
    seeds = [seed0 + k for k in range(spec.replications)]
    values = sorted(float(v) for v in spec.values)
    jobs, keys = [], []
    for value in values:
        over = variable_overrides(raw, spec.variable, value, spec.junction)
        for s in seeds:
            label = f"{spec.variable}={value:g} seed={s}"
            jobs.append((raw, label, [*over, ("simulation.seed", s)]))
            keys.append((value, s))
    results = _map_cells(jobs, workers)
    name = spec.variable if spec.junction is None else f"{spec.variable}:{spec.junction}"
    rows = [
        {"variable": name, "variable_value": v, "seed": s, **r} for (v, s), r in zip(keys, results)
    ]
    if out is not None:
        write_csv(Path(out) / "sweep.csv", ("variable", "variable_value", "seed", *SUMMARY_FIELDS), rows)
    return rows


def cmd_grid(
    config,
    junction_a: int,
    junction_b: int,
    values_a: Sequence[float],
    values_b: Sequence[float],
    replications: int = 5,
    seed: int | None = None,
    others: float | None = None,
    overrides: Sequence[str] = (),
    out: str | Path | None = "out",
    workers: int = 1,
) -> tuple[list[dict], list[dict]]:
    """Heterogeneous thresholds at two junctions; returns (heat map, per-seed rows)."""
    raw = apply_overrides(load_raw(config), overrides)
    jids = junction_ids(raw)
    for j in (junction_a, junction_b):
        if j not in jids:
            raise UnknownJunction(f"unknown junction {j}; corridor has {jids}")
    if junction_a == junction_b:
        raise ConfigInvalid("grid needs two distinct junctions")
    if others is not None:
        raw = apply_overrides(
            raw, [(f"junction.{j}.threshold_s", float(others)) for j in jids if j not in (junction_a, junction_b)]
        )
    seeds = [base_seed(raw, seed) + k for k in range(replications)]
    jobs, keys = [], []
    for ra in values_a:
        for rb in values_b:
            for s in seeds:
                label = f"r{junction_a}={ra:g} r{junction_b}={rb:g} seed={s}"
                extra = [
                    (f"junction.{junction_a}.threshold_s", float(ra)),
                    (f"junction.{junction_b}.threshold_s", float(rb)),
                    ("simulation.seed", s),
                ]
                jobs.append((raw, label, extra))
                keys.append((float(ra), float(rb), s))
    results = _map_cells(jobs, workers)
    runs = [{"r_a": a, "r_b": b, "seed": s, **r} for (a, b, s), r in zip(keys, results)]
    cells = []
    for ra in values_a:
        for rb in values_b:
            fuel = [r["fuel_total_mL"] for r in runs if r["r_a"] == float(ra) and r["r_b"] == float(rb)]
            cells.append({
                "junction_a": junction_a, "junction_b": junction_b,
                "r_a": float(ra), "r_b": float(rb),
                "mean_fuel": float(np.mean(fuel)), "n_seeds": len(fuel),
            })
    if out is not None:
        out = Path(out)
        write_csv(out / "grid.csv", ("junction_a", "junction_b", "r_a", "r_b", "mean_fuel", "n_seeds"), cells)
        write_csv(out / "grid_runs.csv", ("r_a", "r_b", "seed", *SUMMARY_FIELDS), runs)
    return cells, runs


# -- analytic --------------------------------------------------------------------

ANALYTIC_FIELDS = ("headway_s", "target_speed_mps", "dF1_mL", "dF2_mL", "dTC_mL")


def cmd_analytic(
    model: FuelModel, d1: float, d2: float, v0: float, headways: Sequence[float], out=None
) -> tuple[list[dict], float]:
    rows = [
        {
            "headway_s": c.headway,
            "target_speed_mps": c.target_speed,
            "dF1_mL": c.dF1,
            "dF2_mL": c.dF2,
            "dTC_mL": c.dTC,
        }
        for c in cost_table(headways, d1, d2, v0, model)
    ]
    r_star = optimal_threshold_analytic(d1, d2, v0, model, headway_max=max(headways))
    if out is not None:
        write_csv(Path(out) / "analytic.csv", ANALYTIC_FIELDS, rows)
    return rows, r_star


# -- argument handling ---------------------------------------------------------

def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
    p.add_argument("config_pos", nargs="?", metavar="CONFIG", help="scenario TOML (or use --config)")
    p.add_argument("--config", help="scenario TOML")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted config override, repeatable")
    p.add_argument("--event-log", action="store_true", help="write events.jsonl")
    p.set_defaults(config_required=config_required)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="platoon-cascade", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    _common(sub.add_parser("run", help="single coordinated run"))
    _common(sub.add_parser("baseline", help="single run with every threshold at 0"))

    p = sub.add_parser("sweep", help="one variable x seeds")
    _common(p)
    p.add_argument("--variable", required=True,
                   help="threshold_all | threshold_at:<junction> | d1_all | d2_tail | cav_ratio | background_ratio")
    p.add_argument("--values", type=_floats, required=True)
    p.add_argument("--replications", type=int, default=5)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("grid", help="thresholds at two junctions")
    _common(p)
    p.add_argument("--junction-a", type=int, required=True)
    p.add_argument("--junction-b", type=int, required=True)
    p.add_argument("--values-a", type=_floats, required=True)
    p.add_argument("--values-b", type=_floats, required=True)
    p.add_argument("--others", type=float, default=None, help="threshold for every other junction")
    p.add_argument("--replications", type=int, default=5)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("analytic", help="closed-form incremental cost table")
    _common(p, config_required=False)
    p.add_argument("--fixture", choices=sorted(FIXTURES), default=None)
    p.add_argument("--d1", type=float, default=None)
    p.add_argument("--d2", type=float, default=None)
    p.add_argument("--v0", type=float, default=None)
    p.add_argument("--junction", type=int, default=None, help="take d1/d2 at this junction of --config")
    p.add_argument("--h-max", type=float, default=25.0)
    p.add_argument("--h-step", type=float, default=1.0)
    return ap


def _config_path(args) -> str | None:
    path = args.config or args.config_pos
    if args.config and args.config_pos and args.config != args.config_pos:
        raise ConfigInvalid("config given both positionally and with --config")
    if path is None and args.config_required:
        raise ConfigInvalid("a scenario is required (--config PATH)")
    return path


def _analytic_inputs(args, path):
    model, d1, d2, v0 = None, args.d1, args.d2, args.v0
    if path is not None:
        raw = apply_overrides(load_raw(path), args.override)
        cfg = build_scenario(raw)
        model = cfg.fuel.for_class("cav")
        js = cfg.corridor.junctions
        j = cfg.corridor.junction(args.junction) if args.junction is not None else js[0]
        d1 = j.d1 if d1 is None else d1
        d2 = (cfg.corridor.mainline_length - j.position) if d2 is None else d2
        v0 = cfg.dynamics.v0_cruise if v0 is None else v0
    if args.fixture is not None:
        model = FIXTURES[args.fixture]
    model = model or FIXTURES["reference"]
    d1 = 1000.0 if d1 is None else d1
    d2 = 1000.0 if d2 is None else d2
    v0 = 20.0 if v0 is None else v0
    return model, d1, d2, v0


def _print_rows(rows: list[dict], fields: Sequence[str]) -> None:
    sys.stdout.write(format_csv(fields, rows))


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        path = _config_path(args)
        if args.command in ("run", "baseline"):
            fn = cmd_run if args.command == "run" else cmd_baseline
            row = fn(path, args.override, args.seed, args.out, args.event_log)
            _print_rows([row], ("scenario", "seed", *SUMMARY_FIELDS))
        elif args.command == "sweep":
            variable, junction = args.variable, None
            if variable.startswith("threshold_at"):
                variable, _, jid = variable.partition(":")
                junction = int(jid) if jid else None
            overrides = list(args.override) + (["simulation.event_log=false"] if not args.event_log else [])
            spec = SweepSpec(path, variable, tuple(args.values), args.replications, junction, args.seed,
                             tuple(overrides))
            rows = cmd_sweep(spec, args.out, args.workers)
            print(f"{len(rows)} runs -> {Path(args.out) / 'sweep.csv'}")
        elif args.command == "grid":
            cells, _ = cmd_grid(path, args.junction_a, args.junction_b, args.values_a, args.values_b,
                                args.replications, args.seed, args.others, args.override, args.out,
                                args.workers)
            best = min(cells, key=lambda c: c["mean_fuel"])
            print(f"{len(cells)} cells -> {Path(args.out) / 'grid.csv'}")
            print(f"argmin: r{best['junction_a']}={best['r_a']:g} r{best['junction_b']}={best['r_b']:g} "
                  f"mean_fuel={best['mean_fuel']:.1f} mL")
        else:
            model, d1, d2, v0 = _analytic_inputs(args, path)
            n = int(round(args.h_max / args.h_step))
            headways = [round(k * args.h_step, 9) for k in range(n + 1)]
            rows, r_star = cmd_analytic(model, d1, d2, v0, headways, args.out)
            _print_rows(rows, ANALYTIC_FIELDS)
            print(f"r* = {r_star:.6g} s  (d1={d1:g} m, d2={d2:g} m, v0={v0:g} m/s)")
    except CellFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT if isinstance(exc.cause, InvariantViolation) else EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except HeadwayTooLarge as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigInvalid, OSError, ValueError, KeyError, TypeError, tomllib.TOMLDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
