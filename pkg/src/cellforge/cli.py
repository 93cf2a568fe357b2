"""Command-line front end.

    cellforge gen-scenario --seed 7 --complexity complex --out runs/
    cellforge plan --scenario runs/scenario.json --composition JS-L5-JS-L4-JF-L3 --planner astar
    cellforge metrics --samples 50 --K 10 --variants astar,spline,sampler --jobs 8
    cellforge optimize --scenario runs/scenario.json --planner near_optimal --jobs 8

Exit codes: 0 success, 1 usage or configuration error, 2 infeasible result.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from .bilevel import PLANNER_CHOICES, ModuleLibrary, default_library, enumerate_compositions, optimize_composition, results_rows
from .metrics import (
    VARIANTS,
    MetricsReport,
    get_variant,
    make_population,
    records_csv,
    repeats_csv,
    run_campaign_repeat,
    run_campaign_single,
    summary,
)
from .model import Composition, IkConfig, ModuleSpec, from_ids
from .planners import build_graph, run_planner
from .seeding import derived_rng
from .traj import CONNECTORS, make_connector
from .world import GenerationError, GeneratorParams, Scenario, generate_scenario, task_sequence

CONFIG_SCHEMA = "cellforge-config/1"
PLAN_SCHEMA = "cellforge-plan/1"
METRICS_SCHEMA = "cellforge-metrics/1"
TRACE_SCHEMA = "cellforge-trace/1"
SEED_ENV = "CELLFORGE_SEED"

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE = 0, 1, 2

# planner name on the command line -> (planner, default connector)
PLAN_CHOICES = {
    "near_optimal": ("near_optimal", "deterministic"),
    "dijkstra": ("near_optimal", "deterministic"),
    "astar": ("astar", "deterministic"),
    "greedy": ("greedy", "two_stage"),
    "spline": ("greedy", "two_stage"),
    "sampler": ("greedy", "sampling"),
}

# compositions of the built-in library used by the metrics campaign
CAMPAIGN_COMPOSITIONS = ("JS-L5-JS-L4-JF-L3", "JS-L4-JF-L4-JF-L3", "JS-L5-JF-L4-JS-L3", "JS-L5-JF-L5")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    master_seed: int | None = None
    ik: dict = field(default_factory=dict)
    generator: dict = field(default_factory=dict)
    connectors: dict = field(default_factory=dict)
    jobs: int = 1
    out: str = "."

    def __post_init__(self):
        if self.jobs < 1:
            raise UsageError("jobs must be >= 1")
        try:
            self.ik_config()
            GeneratorParams.from_dict(self.generator)
            for name, opts in self.connectors.items():
                make_connector(name, opts)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"invalid configuration: {exc}") from None

    def ik_config(self) -> IkConfig:
        return IkConfig(**self.ik)

    def to_dict(self) -> dict:
        return {"schema": CONFIG_SCHEMA, **asdict(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        schema = d.pop("schema", CONFIG_SCHEMA)
        if schema != CONFIG_SCHEMA:
            raise UsageError(f"unsupported config schema {schema!r}")
        unknown = set(d) - {"master_seed", "ik", "generator", "connectors", "jobs", "out"}
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS, help=f"master seed (fallback: ${SEED_ENV})")
    g.add_argument("--config", default=argparse.SUPPRESS, help="JSON run configuration")
    g.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    g.add_argument("--jobs", type=int, default=argparse.SUPPRESS, help="worker processes")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = _Parser(prog="cellforge", description=__doc__.split("\n\n")[0], parents=[common])
    ap.add_argument("--version", action="version", version=f"cellforge {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-scenario", parents=[common], help="generate a random palletization scenario")
    g.add_argument("--complexity", choices=("simple", "complex"))
    g.add_argument("--boxes", type=int, nargs=2, metavar=("MIN", "MAX"), help="box count range")
    g.add_argument("--name", default="scenario.json", help="file name inside the output directory")

    p = sub.add_parser("plan", parents=[common], help="plan the motion for one scenario and composition")
    p.add_argument("--scenario", required=True)
    p.add_argument("--composition", required=True, help="module ids joined by '-', or a JSON file of modules")
    p.add_argument("--library", help="module library JSON (default: built-in)")
    p.add_argument("--planner", choices=sorted(PLAN_CHOICES), default="near_optimal")
    p.add_argument("--connector", choices=CONNECTORS)
    p.add_argument("--max-poses", type=int, help="plan only the first N task poses")
    p.add_argument("--embed-trajectory", action="store_true")
    p.add_argument("--trajectory-csv", help="also write the sampled trajectory to this file")

    m = sub.add_parser("metrics", parents=[common], help="run the metric campaigns")
    m.add_argument("--samples", type=int, default=50)
    m.add_argument("--K", type=int, help="repeats per sample for the consistency campaign")
    m.add_argument("--repeat-samples", type=int, help="samples in the consistency campaign (default: --samples)")
    m.add_argument("--variants", default="astar,spline,sampler")
    m.add_argument("--compositions", help="comma-separated composition ids (default: built-in set)")
    m.add_argument("--library", help="module library JSON (default: built-in)")
    m.add_argument("--boxes", type=int, nargs=2, metavar=("MIN", "MAX"), default=(1, 2))
    m.add_argument("--group-by", choices=("complexity", "x_ref"))

    o = sub.add_parser("optimize", parents=[common], help="search the best composition for a scenario")
    o.add_argument("--scenario", required=True)
    o.add_argument("--library", help="module library JSON (default: built-in)")
    o.add_argument("--planner", choices=sorted(PLANNER_CHOICES), default="near_optimal")
    o.add_argument("--connector", choices=CONNECTORS)
    o.add_argument("--no-filters", action="store_true", help="plan every composition (oracle mode)")
    return ap


# -- helpers ------------------------------------------------------------------------


def _resolve(args) -> tuple[RunConfig, int]:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    if hasattr(args, "jobs"):
        cfg.jobs = args.jobs
    if hasattr(args, "out"):
        cfg.out = args.out
    if cfg.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    if hasattr(args, "seed"):
        seed = args.seed
    elif cfg.master_seed is not None:
        seed = cfg.master_seed
    elif os.environ.get(SEED_ENV, "").strip():
        try:
            seed = int(os.environ[SEED_ENV])
        except ValueError:
            raise UsageError(f"${SEED_ENV} must be an integer") from None
    else:
        seed = 0
    if seed < 0:
        raise UsageError("seeds must be >= 0")
    cfg.master_seed = seed
    return cfg, seed


@contextmanager
def _mapper(jobs: int):
    if jobs <= 1:
        yield map
        return
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        yield lambda fn, items: ex.map(fn, items, chunksize=1)


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")


def _library(path) -> ModuleLibrary:
    if path is None:
        return default_library()
    try:
        return ModuleLibrary.load(path)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"cannot read library {path}: {exc}") from None


def _composition(spec: str, lib: ModuleLibrary) -> Composition:
    if spec.endswith(".json") or os.path.isfile(spec):
        try:
            data = json.loads(Path(spec).read_text(encoding="utf-8"))
            mods = data["modules"] if isinstance(data, dict) else data
            return Composition(tuple(ModuleSpec.from_dict(m) for m in mods))
        except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"cannot read composition {spec}: {exc}") from None
    try:
        return from_ids(spec.split("-"), lib.modules)
    except (KeyError, ValueError) as exc:
        raise UsageError(f"invalid composition {spec!r}: {exc}") from None


def _scenario(path) -> Scenario:
    try:
        return Scenario.load(path)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"cannot read scenario {path}: {exc}") from None


def _clean(x):
    """JSON-safe copy: non-finite floats become None."""
    if isinstance(x, float):
        return x if math.isfinite(x) else None
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    return x


# -- commands ---------------------------------------------------------------------


def cmd_gen_scenario(args, cfg: RunConfig, seed: int) -> int:
    gen = dict(cfg.generator)
    if args.complexity:
        gen["complexity"] = args.complexity
    if args.boxes:
        gen["box_count"] = list(args.boxes)
    try:
        params = GeneratorParams.from_dict(gen)
        s = generate_scenario(seed, params)
    except (TypeError, ValueError, GenerationError) as exc:
        raise UsageError(f"scenario generation failed: {exc}") from None
    path = _out_dir(cfg) / args.name
    s.save(path)
    n_p = task_sequence(s).n_p
    print(f"{path}: {len(s.boxes)} boxes, {len(s.obstacles)} obstacles, {n_p} task poses ({s.complexity})")
    return EXIT_OK


def cmd_plan(args, cfg: RunConfig, seed: int) -> int:
    s = _scenario(args.scenario)
    comp = _composition(args.composition, _library(args.library))
    planner, default_con = PLAN_CHOICES[args.planner]
    con_name = args.connector or default_con
    if planner == "greedy" and con_name == "deterministic" and args.planner != "greedy":
        raise UsageError("the spline and sampler variants need a stochastic connector")
    P = task_sequence(s)
    if args.max_poses is not None:
        if args.max_poses < 1:
            raise UsageError("--max-poses must be >= 1")
        P = P.truncated(args.max_poses)
    con = make_connector(con_name, cfg.connectors.get(con_name))
    ik_cfg = cfg.ik_config()
    graph = build_graph(comp, P, s, ik_cfg) if planner != "greedy" else None
    out = run_planner(planner, comp, P, s, con, derived_rng(seed, "plan"), ik_cfg, graph)

    report = {
        "schema": PLAN_SCHEMA,
        "seed": seed,
        "config": cfg.to_dict(),
        "scenario": args.scenario,
        "composition": comp.id,
        "planner": args.planner,
        "connector": con.to_dict(),
        "n_p": P.n_p,
        **out.to_dict(args.embed_trajectory),
    }
    report["config"]["out"] = None
    out_dir = _out_dir(cfg)
    _write_json(out_dir / "plan.json", _clean(report))
    if args.trajectory_csv and out.feasible:
        traj = out.trajectory()
        if traj is not None:
            traj.to_csv(args.trajectory_csv)
    g = f"{out.cost:.6f} s" if out.feasible else "infeasible"
    print(f"{args.planner}/{con_name} on {comp.id}: g = {g}, {out.stats.edges_evaluated} edges evaluated")
    return EXIT_OK if out.feasible else EXIT_INFEASIBLE


def cmd_metrics(args, cfg: RunConfig, seed: int) -> int:
    if args.samples < 1:
        raise UsageError("--samples must be >= 1")
    if args.K is not None and args.K < 2:
        raise UsageError("--K must be >= 2")
    try:
        variants = [get_variant(v.strip()) for v in args.variants.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if not variants:
        raise UsageError(f"--variants needs at least one of {', '.join(VARIANTS)}")
    lib = _library(args.library)
    ids = args.compositions.split(",") if args.compositions else CAMPAIGN_COMPOSITIONS
    comps = [_composition(c.strip(), lib) for c in ids]
    gen = dict(cfg.generator)
    gen["box_count"] = list(args.boxes)
    try:
        params = [GeneratorParams.from_dict({**gen, "complexity": c}) for c in ("simple", "complex")]
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid generator parameters: {exc}") from None

    out_dir = _out_dir(cfg)
    pop = make_population(args.samples, seed, comps, params)
    with _mapper(cfg.jobs) as map_fn:
        records = run_campaign_single(pop, variants, seed, map_fn, cfg.connectors)
        repeats = []
        if args.K is not None:
            rpop = pop[: args.repeat_samples] if args.repeat_samples else pop
            for v in variants:
                repeats += run_campaign_repeat(rpop, v, args.K, seed, map_fn, cfg.connectors)

    reports = [MetricsReport.from_records(v.name, records, repeats) for v in variants]
    doc = {
        "schema": METRICS_SCHEMA,
        "seed": seed,
        "config": {**cfg.to_dict(), "out": None},
        "campaign": {
            "samples": args.samples,
            "K": args.K,
            "variants": [asdict(v) for v in variants],
            "compositions": [c.id for c in comps],
        },
        **summary(reports),
    }
    if args.group_by:
        groups = {}
        for key in sorted({getattr(r, args.group_by) for r in records}):
            sub = [r for r in records if getattr(r, args.group_by) == key]
            groups[str(key)] = summary([MetricsReport.from_records(v.name, sub) for v in variants])["metrics"]
        doc["groups"] = {"by": args.group_by, "metrics": groups}
    (out_dir / "records.csv").write_text(records_csv(records), encoding="utf-8")
    if repeats:
        (out_dir / "repeats.csv").write_text(repeats_csv(repeats), encoding="utf-8")
    _write_json(out_dir / "summary.json", _clean(doc))

    for rep in reports:
        vals = ", ".join(f"{k}={'n/a' if getattr(rep, k) is None else f'{getattr(rep, k):.4f}'}" for k in "OTRC")
        print(f"{rep.variant}: {vals} ({rep.n_conditioning}/{rep.n_samples} reference-feasible)")
    return EXIT_OK


def cmd_optimize(args, cfg: RunConfig, seed: int) -> int:
    s = _scenario(args.scenario)
    lib = _library(args.library)
    if next(enumerate_compositions(lib), None) is None:
        raise UsageError("the module library generates no composition")
    with _mapper(cfg.jobs) as map_fn:
        trace = optimize_composition(
            s,
            lib,
            args.planner,
            seed,
            map_fn,
            cfg.ik_config(),
            args.connector,
            not args.no_filters,
            cfg.connectors,
        )
    doc = {
        "schema": TRACE_SCHEMA,
        "seed": seed,
        "config": {**cfg.to_dict(), "out": None},
        "scenario": args.scenario,
        "library": lib.to_dict(),
        **trace.to_dict(),
    }
    out_dir = _out_dir(cfg)
    _write_json(out_dir / "trace.json", _clean(doc))
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["index", "composition", "fate", "cost", "wall_time"], lineterminator="\n")
    w.writeheader()
    for row in results_rows(trace):
        row["cost"] = repr(row["cost"]) if math.isfinite(row["cost"]) else "inf"
        row["wall_time"] = repr(row["wall_time"])
        w.writerow(row)
    (out_dir / "compositions.csv").write_text(buf.getvalue(), encoding="utf-8")

    c = trace.counts
    print(
        f"generated {c['generated']}, after min-motors {c['after_min_motors']}, after reach {c['after_reach']}, "
        f"after payload {c['after_payload']}, feasible {c['feasible']}"
    )
    if trace.best is None:
        print("no feasible composition")
        return EXIT_INFEASIBLE
    print(f"best: {trace.best.id} with g = {trace.best_cost:.6f} s")
    return EXIT_OK


COMMANDS = {
    "gen-scenario": cmd_gen_scenario,
    "plan": cmd_plan,
    "metrics": cmd_metrics,
    "optimize": cmd_optimize,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg, seed = _resolve(args)
        return COMMANDS[args.command](args, cfg, seed)
    except UsageError as exc:
        print(f"cellforge: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
