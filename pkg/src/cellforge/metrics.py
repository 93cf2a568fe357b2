"""Trade-off metrics for motion-level variants and the two campaign protocols.

Given a reference planner (cost g*, time t*) and a variant (g_hat, t_hat)
run on the same inputs:

    O = mean (g_hat - g*) / g*          over records with both costs finite
    T = mean (t* - t_hat) / t*          over the same records
    R = P(g_hat finite | g* finite)
    C = mean over inputs of Var(outputs) / Mean(outputs), K repeated runs

Variances are population variances; means use exact summation
(``statistics.fmean``), so constant outputs give C = 0 exactly.
"""

from __future__ import annotations

import csv
import io
import math
import statistics
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

from .model import Composition
from .planners import run_planner
from .seeding import derived_rng, stable_seed
from .traj import make_connector
from .world import GeneratorParams, generate_scenario, task_sequence

# Wall-clock derived columns; everything else in a report is seed-determined.
TIMING_FIELDS = ("t_star", "t_hat")


class MetricsError(ValueError):
    """A metric is undefined for the given records (empty conditioning set)."""


@dataclass
class SampleRecord:
    sample_id: int
    variant: str
    x_ref: str
    theta_ref: int
    g_star: float
    t_star: float
    g_hat: float
    t_hat: float
    complexity: str = ""

    def __post_init__(self):
        if self.t_star < 0 or self.t_hat < 0:
            raise ValueError("times must be >= 0")


@dataclass
class RepeatRecord:
    sample_id: int
    variant: str
    outputs: list

    def __post_init__(self):
        if len(self.outputs) < 2:
            raise ValueError("need K >= 2 repeated outputs")


def _both_finite(records):
    return [r for r in records if math.isfinite(r.g_star) and math.isfinite(r.g_hat)]


def _relative_excess(g_hat: float, g_star: float) -> float:
    if g_star == 0.0:
        # a single-pose task: nothing to move, any excess is unbounded
        return 0.0 if g_hat == 0.0 else math.inf
    return (g_hat - g_star) / g_star


def optimality_score(records: Sequence[SampleRecord]) -> float:
    rows = _both_finite(records)
    if not rows:
        raise MetricsError("optimality undefined: no record with both costs finite")
    return statistics.fmean(_relative_excess(r.g_hat, r.g_star) for r in rows)


def time_gain_score(records: Sequence[SampleRecord]) -> float:
    rows = _both_finite(records)
    if not rows:
        raise MetricsError("time gain undefined: no record with both costs finite")
    if any(r.t_star <= 0 for r in rows):
        raise MetricsError("time gain needs t_star > 0")
    return statistics.fmean((r.t_star - r.t_hat) / r.t_star for r in rows)


def robustness_score(records: Sequence[SampleRecord]) -> float:
    cond = [r for r in records if math.isfinite(r.g_star)]
    if not cond:
        raise MetricsError("robustness undefined: the reference never found a solution")
    return sum(math.isfinite(r.g_hat) for r in cond) / len(cond)


def relative_variance(outputs: Iterable[float]) -> float | None:
    """Var/Mean of the finite outputs; None when fewer than two remain."""
    xs = [float(x) for x in outputs if math.isfinite(x)]
    if len(xs) < 2:
        return None
    # exact rational mean and variance: constant outputs give exactly 0
    mean = statistics.mean(xs)
    if mean == 0.0:
        return 0.0
    return statistics.pvariance(xs) / mean


def consistency_score(repeats: Sequence[RepeatRecord]) -> float:
    scores = [c for c in (relative_variance(r.outputs) for r in repeats) if c is not None]
    if not scores:
        raise MetricsError("consistency undefined: no record with two finite outputs")
    return statistics.fmean(scores)


def _maybe(fn, arg):
    try:
        return fn(arg)
    except MetricsError:
        return None


@dataclass
class MetricsReport:
    variant: str
    O: float | None
    T: float | None
    R: float | None
    C: float | None
    n_samples: int
    n_conditioning: int
    records: list = field(default_factory=list)
    repeats: list = field(default_factory=list)

    @classmethod
    def from_records(cls, variant, records, repeats=()) -> "MetricsReport":
        records = [r for r in records if r.variant == variant]
        repeats = [r for r in repeats if r.variant == variant]
        return cls(
            variant,
            _maybe(optimality_score, records) if records else None,
            _maybe(time_gain_score, records) if records else None,
            _maybe(robustness_score, records) if records else None,
            _maybe(consistency_score, repeats) if repeats else None,
            len(records),
            sum(math.isfinite(r.g_star) for r in records),
            records,
            repeats,
        )


# -- campaigns ---------------------------------------------------------------


@dataclass(frozen=True)
class Variant:
    """A motion-level variant and the reference it is scored against."""

    name: str
    planner: str
    connector: str
    reference_connector: str


VARIANTS = {
    "astar": Variant("astar", "astar", "deterministic", "deterministic"),
    "spline": Variant("spline", "greedy", "two_stage", "two_stage"),
    "sampler": Variant("sampler", "greedy", "sampling", "two_stage"),
}


def get_variant(name: str) -> Variant:
    try:
        return VARIANTS[name]
    except KeyError:
        raise ValueError(f"unknown variant {name!r}; expected one of {', '.join(VARIANTS)}") from None


@dataclass(frozen=True)
class Sample:
    """One input (x, theta): a composition and a generated scenario."""

    sample_id: int
    composition: Composition
    scenario_seed: int
    params: GeneratorParams

    def scenario(self):
        return generate_scenario(self.scenario_seed, self.params)


def make_population(
    n: int,
    master_seed: int,
    compositions: Sequence[Composition],
    params: Sequence[GeneratorParams] = (GeneratorParams("simple"), GeneratorParams("complex")),
) -> list[Sample]:
    """``n`` samples; compositions and scenario classes drawn round-robin,
    scenario seeds derived from the master seed."""
    if n < 1 or not compositions or not params:
        raise ValueError("population needs n >= 1, compositions and scenario parameters")
    out = []
    for i in range(n):
        comp = compositions[i % len(compositions)]
        par = params[(i // len(compositions)) % len(params)]
        out.append(Sample(i, comp, stable_seed(master_seed, "scenario", i) % 2**31, par))
    return out


def _timed_plan(planner, sample, s, P, connector, seed_parts, options):
    t0 = time.perf_counter()
    con = make_connector(connector, options.get(connector))
    out = run_planner(planner, sample.composition, P, s, con, derived_rng(*seed_parts))
    return out.cost, time.perf_counter() - t0


def evaluate_sample(
    sample: Sample, variants: Sequence[Variant], master_seed: int, connector_options: dict | None = None
) -> list[SampleRecord]:
    """Reference and variant runs for one sample. Reference and variant share
    the per-edge seed streams, so a greedy plan never beats its reference."""
    s = sample.scenario()
    P = task_sequence(s)
    seed_parts = (master_seed, "single", sample.sample_id)
    opts = connector_options or {}
    refs = {}
    out = []
    for v in variants:
        if v.reference_connector not in refs:
            refs[v.reference_connector] = _timed_plan("near_optimal", sample, s, P, v.reference_connector, seed_parts, opts)
        g_star, t_star = refs[v.reference_connector]
        g_hat, t_hat = _timed_plan(v.planner, sample, s, P, v.connector, seed_parts, opts)
        out.append(
            SampleRecord(sample.sample_id, v.name, sample.composition.id, sample.scenario_seed, g_star, t_star, g_hat, t_hat, s.complexity)
        )
    return out


def _single_task(args):
    return evaluate_sample(*args)


def run_campaign_single(
    pop: Sequence[Sample],
    variants: Sequence[Variant],
    master_seed: int,
    map_fn: Callable = map,
    connector_options: dict | None = None,
) -> list[SampleRecord]:
    """Every variant once per sample against the near-optimal reference."""
    tasks = [(smp, tuple(variants), master_seed, connector_options) for smp in pop]
    records = []
    for chunk in map_fn(_single_task, tasks):
        records.extend(chunk)
    order = {v.name: k for k, v in enumerate(variants)}
    records.sort(key=lambda r: (order[r.variant], r.sample_id))
    return records


def repeat_sample(
    sample: Sample, variant: Variant, K: int, master_seed: int, connector_options: dict | None = None
) -> RepeatRecord:
    s = sample.scenario()
    P = task_sequence(s)
    con = make_connector(variant.connector, (connector_options or {}).get(variant.connector))
    outputs = []
    for k in range(K):
        out = run_planner(variant.planner, sample.composition, P, s, con, derived_rng(master_seed, "repeat", sample.sample_id, k))
        outputs.append(out.cost)
    return RepeatRecord(sample.sample_id, variant.name, outputs)


def _repeat_task(args):
    return repeat_sample(*args)


def run_campaign_repeat(
    pop: Sequence[Sample],
    variant: Variant,
    K: int,
    master_seed: int,
    map_fn: Callable = map,
    connector_options: dict | None = None,
) -> list[RepeatRecord]:
    """K runs of one variant per sample with seeds (master, sample_id, k)."""
    if K < 2:
        raise ValueError("the repeat campaign needs K >= 2")
    return list(map_fn(_repeat_task, [(smp, variant, K, master_seed, connector_options) for smp in pop]))


# -- serialization --------------------------------------------------------------

RECORD_FIELDS = ("sample_id", "variant", "x_ref", "theta_ref", "complexity", "g_star", "g_hat") + TIMING_FIELDS


def _num(x):
    if isinstance(x, float):
        return repr(x) if math.isfinite(x) else "inf"
    return x


def records_csv(records: Sequence[SampleRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_FIELDS)
    for r in records:
        d = asdict(r)
        w.writerow([_num(d[k]) for k in RECORD_FIELDS])
    return buf.getvalue()


def repeats_csv(repeats: Sequence[RepeatRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    K = max((len(r.outputs) for r in repeats), default=0)
    w.writerow(["sample_id", "variant", "relative_variance"] + [f"g_{k}" for k in range(K)])
    for r in repeats:
        c = relative_variance(r.outputs)
        w.writerow([r.sample_id, r.variant, "" if c is None else repr(c)] + [_num(float(x)) for x in r.outputs])
    return buf.getvalue()


def summary(reports: Sequence[MetricsReport]) -> dict:
    """Table-like summary: rows are metrics, columns variants. Seed-determined
    values sit under "metrics"; anything derived from wall-clock time,
    including the time gain T, sits under "timing"."""
    metrics = {"O": {}, "R": {}, "C": {}, "n_samples": {}, "n_conditioning": {}}
    timing = {"T": {}, "mean_t_star": {}, "mean_t_hat": {}}
    for rep in reports:
        v = rep.variant
        metrics["O"][v] = rep.O
        metrics["R"][v] = rep.R
        metrics["C"][v] = rep.C
        metrics["n_samples"][v] = rep.n_samples
        metrics["n_conditioning"][v] = rep.n_conditioning
        timing["T"][v] = rep.T
        timing["mean_t_star"][v] = statistics.fmean(r.t_star for r in rep.records) if rep.records else None
        timing["mean_t_hat"][v] = statistics.fmean(r.t_hat for r in rep.records) if rep.records else None
    return {"metrics": metrics, "timing": timing}


def group_reports(records, repeats, variants, key: str | None = None) -> dict:
    """Reports per variant, optionally split by a record field (e.g. complexity)."""
    if key is None:
        return {"all": [MetricsReport.from_records(v.name, records, repeats) for v in variants]}
    groups = sorted({getattr(r, key) for r in records})
    return {
        str(gv): [MetricsReport.from_records(v.name, [r for r in records if getattr(r, key) == gv]) for v in variants]
        for gv in groups
    }
