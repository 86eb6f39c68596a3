"""Benchmark harness: suites of paired-seed episodes, metrics and sweeps."""

from __future__ import annotations

import logging
import math
import random
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

from .engine import AssuranceEngine, EngineConfig, ModelParams
from .exact import ExactEngine, ParametricEngine
from .mape import MapeController
from .model import CORE_OPERATIONS, TAS_SERVICES, ConcreteService, RequirementSpec, ServiceRegistry
from .simulator import EpisodeAborted, ScenarioSpec, run_episode
from .smc import SmcEngine, SmcStrategy
from .trace import TraceLog

log = logging.getLogger(__name__)

CSV_HEADER = ("run_id", "scenario", "engine", "repetition", "hour", "invocations", "failures", "failure_fraction",
              "mean_cost", "r1_violation", "r2_violation", "adaptations", "verification_calls",
              "verification_wall_micros", "evidence_volume")


def make_engine(config: EngineConfig, seed: int = 0) -> AssuranceEngine:
    if config.engine == "rqv":
        return ExactEngine()
    if config.engine == "rqv-parametric":
        return ParametricEngine()
    if config.engine == "rsmc":
        return SmcEngine(SmcStrategy(config.E, config.A, seed))
    raise ValueError(f"unknown engine {config.engine!r}")


def repetition_seed(base_seed: int, repetition: int) -> int:
    """Environment seed of repetition k; shared by every engine (paired seeding)."""
    return random.Random(f"pas-rep/{base_seed}/{repetition}").getrandbits(63)


@dataclass
class Summary:
    """Five-number summary with Tukey 1.5 IQR whiskers."""

    n: int
    mean: float
    std: float
    min: float
    q1: float
    median: float
    q3: float
    max: float
    whisker_low: float
    whisker_high: float

    @classmethod
    def of(cls, values) -> "Summary | None":
        xs = sorted(float(v) for v in values)
        if not xs:
            return None
        n = len(xs)
        if n == 1:
            q1 = med = q3 = xs[0]
        else:
            q1, med, q3 = statistics.quantiles(xs, n=4, method="inclusive")
        iqr = q3 - q1
        # extreme data points inside the fences, never inside the box
        lo = min(q1, min((x for x in xs if x >= q1 - 1.5 * iqr), default=q1))
        hi = max(q3, max((x for x in xs if x <= q3 + 1.5 * iqr), default=q3))
        std = statistics.stdev(xs) if n > 1 else 0.0
        return cls(n, statistics.fmean(xs), std, xs[0], q1, med, q3, xs[-1], lo, hi)


@dataclass
class HourRow:
    run_id: str
    scenario: str
    engine: str
    repetition: int
    hour: int
    invocations: int
    failures: int
    failure_fraction: float
    mean_cost: float
    r1_violation: bool
    r2_violation: bool
    adaptations: int
    verification_calls: int
    verification_wall_micros: float
    evidence_volume: int

    def values(self) -> tuple:
        return tuple(getattr(self, name) for name in CSV_HEADER)


def _requirements_at(scenario: ScenarioSpec, t: float) -> RequirementSpec:
    req = scenario.requirements
    for ev in scenario.events:
        if ev.time <= t and hasattr(ev, "requirements"):
            req = ev.requirements
    return req


def hourly_rows(trace: TraceLog, scenario: ScenarioSpec, engine: str, repetition: int) -> list[HourRow]:
    hours = max(1, math.ceil(trace.horizon_hours))
    inv = [[0, 0, 0.0] for _ in range(hours)]
    for o in trace.invocations:
        b = inv[min(int(o.clock), hours - 1)]
        b[0] += 1
        b[1] += o.workflow_failed
        b[2] += o.total_cost
    ver = [[0, 0.0, 0] for _ in range(hours)]
    for v in trace.verifications:
        b = ver[min(int(v.clock), hours - 1)]
        b[0] += v.calls
        b[1] += v.wall_micros
        b[2] += v.volume
    adapt = [0] * hours
    for a in trace.adaptations:
        if not a.noop:
            adapt[min(int(a.clock), hours - 1)] += 1
    run_id = f"{scenario.name}/{engine}/{repetition}"
    rows = []
    for h in range(hours):
        n, f, c = inv[h]
        ff = f / n if n else 0.0
        mc = c / n if n else 0.0
        req = _requirements_at(scenario, h)
        rows.append(HourRow(run_id, scenario.name, engine, repetition, h, n, f, ff, mc,
                            n > 0 and ff > req.max_failure_prob, n > 0 and mc > req.max_avg_cost,
                            adapt[h], ver[h][0], ver[h][1], ver[h][2]))
    return rows


def metric_timeliness(log: TraceLog) -> dict:
    ver = Summary.of(v.wall_micros for v in log.verifications)
    lat = Summary.of(a.latency_micros for a in log.adaptations)
    return {"empty": ver is None, "verification_micros": ver, "adaptation_latency_micros": lat}


def metric_overhead(log: TraceLog) -> dict:
    total = math.fsum(v.wall_micros for v in log.verifications)
    fraction = total / log.wall_micros if log.wall_micros > 0 else 0.0
    return {"verification_wall_micros": total, "overhead_fraction": fraction,
            "evidence_volume": sum(v.volume for v in log.verifications),
            "verification_calls": sum(v.calls for v in log.verifications)}


def metric_violations(log: TraceLog, requirements: RequirementSpec) -> dict:
    scenario = ScenarioSpec(log.scenario, ServiceRegistry(()), requirements=requirements,
                            horizon_hours=log.horizon_hours)
    rows = hourly_rows(log, scenario, log.engine, 0)
    return {
        "hours": [{"hour": r.hour, "invocations": r.invocations, "failure_fraction": r.failure_fraction,
                   "mean_cost": r.mean_cost, "r1_violation": r.r1_violation, "r2_violation": r.r2_violation}
                  for r in rows],
        "r1_violations": sum(r.r1_violation for r in rows),
        "r2_violations": sum(r.r2_violation for r in rows),
        "integrations": [{"service": i.service, "event_time": i.event_time, "bound_at": i.clock,
                          "deadline": i.deadline, "met_deadline": i.met_deadline} for i in log.integrations],
    }


@dataclass
class EpisodeResult:
    scenario: str
    engine: str
    repetition: int
    seed: int
    rows: list[HourRow] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    error: str | None = None

    @property
    def key(self) -> tuple:
        return (self.scenario, self.engine, self.repetition)


def _episode(job) -> EpisodeResult:
    scenario, engine_cfg, repetition, seed = job
    scen = scenario.with_seed(seed)
    engine = make_engine(engine_cfg, seed)
    result = EpisodeResult(scenario.name, engine_cfg.label, repetition, seed)
    controller = MapeController.for_scenario(scen, engine, engine_cfg.label)
    try:
        trace = run_episode(scen, controller)
    except EpisodeAborted as exc:
        trace = exc.trace
        result.error = str(exc)
    result.rows = hourly_rows(trace, scen, engine_cfg.label, repetition)
    timing = metric_timeliness(trace)
    over = metric_overhead(trace)
    result.summary = {
        "arrivals": trace.arrivals,
        "adaptations": sum(1 for a in trace.adaptations if not a.noop),
        "degraded_rounds": sum(1 for a in trace.adaptations if a.degraded),
        "verification_rounds": len(trace.verifications),
        "verification_micros": [v.wall_micros for v in trace.verifications],
        "adaptation_latency_micros": [a.latency_micros for a in trace.adaptations],
        "overhead_fraction": over["overhead_fraction"],
        "evidence_volume": over["evidence_volume"],
        "verification_calls": over["verification_calls"],
        "episode_wall_micros": trace.wall_micros,
        "median_verification_micros": timing["verification_micros"].median if not timing["empty"] else None,
        "integrations": metric_violations(trace, scen.requirements)["integrations"],
    }
    return result


@dataclass
class BenchmarkReport:
    episodes: list[EpisodeResult]
    timing: str = "wall"
    sweep: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def rows(self) -> list[HourRow]:
        return [r for e in self.episodes for r in e.rows]

    def engines(self) -> list[str]:
        return list(dict.fromkeys(e.engine for e in self.episodes))

    def failed(self) -> list[EpisodeResult]:
        return [e for e in self.episodes if e.error]


def run_suite(suite: list[ScenarioSpec], engines: list[EngineConfig], repetitions: int, workers: int = 1,
              timing: str = "wall") -> BenchmarkReport:
    """Run every (scenario, engine, repetition) episode.

    Repetition k of a scenario uses the same environment seed for every
    engine, so engines face identical worlds until their choices diverge.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    if timing not in ("wall", "none"):
        raise ValueError(f"timing must be 'wall' or 'none', got {timing!r}")
    jobs = [(s, e, k, repetition_seed(s.seed, k)) for s in suite for e in engines for k in range(repetitions)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_episode, jobs))
    else:
        results = [_episode(j) for j in jobs]
    for r in results:
        if r.error:
            log.warning("episode %s/%s/%d failed: %s", r.scenario, r.engine, r.repetition, r.error)
    order = {(s.name, e.label, k): i for i, (s, e, k, _) in enumerate(jobs)}
    results.sort(key=lambda r: order[r.key])
    return BenchmarkReport(results, timing, metadata={"repetitions": repetitions,
                                                      "scenarios": [s.name for s in suite],
                                                      "engines": [e.label for e in engines]})


def synthesize_registry(size: int, seed: int = 0, jitter: float = 0.10) -> ServiceRegistry:
    """``size`` instances per core type.

    Instance i reuses reference row ((i-1) mod 5) + 1. Rows past the first five
    get independent multiplicative jitter in [-jitter, +jitter] on failure
    rate and cost, so size 5 is the reference TAS registry itself.
    """
    rng = random.Random(f"pas-sweep/{seed}/{size}")
    services = []
    for op in CORE_OPERATIONS:
        rows = TAS_SERVICES[op]
        for i in range(1, size + 1):
            _, fr, cost = rows[(i - 1) % len(rows)]
            if i > len(rows):
                fr = round(min(1.0, fr * (1 + rng.uniform(-jitter, jitter))), 6)
                cost = round(cost * (1 + rng.uniform(-jitter, jitter)), 6)
            services.append(ConcreteService(i, op, fr, cost))
    return ServiceRegistry(tuple(services))


@dataclass
class SweepPoint:
    size: int
    engine: str
    candidates: int
    mean_micros: float
    samples_micros: list[float]


def scalability_sweep(base: ScenarioSpec, sizes, engines: list[EngineConfig], repeats: int = 3,
                      retry_depth: int = 1, seed: int = 0) -> list[SweepPoint]:
    """Mean adaptation time (one analyze-plan-execute round) per registry size."""
    sizes = list(sizes)
    if sizes != sorted(sizes):
        raise ValueError("sizes must be ascending")
    points = []
    for size in sizes:
        registry = synthesize_registry(size, seed)
        scen = replace(base, initial_registry=registry, initial_configuration=None, events=(),
                       adaptation=replace(base.adaptation, retry_depth=retry_depth,
                                          max_candidates=max(base.adaptation.max_candidates, size ** 3)))
        for cfg in engines:
            ctrl = MapeController.for_scenario(scen, make_engine(cfg, seed), cfg.label)
            ctrl.start(0.0, registry, scen.requirements)
            n = len(ctrl.candidates())
            times = []
            for r in range(repeats):
                t0 = time.perf_counter()
                ctrl.cycle(float(r), "sweep")
                times.append((time.perf_counter() - t0) * 1e6)
            points.append(SweepPoint(size, cfg.label, n, statistics.fmean(times), times))
    return points


def strategy_timing(scenario: ScenarioSpec, strategies, calls: int = 30, seed: int = 0) -> dict[str, list[float]]:
    """Wall time of single-configuration RSMC verifications per (E, A)."""
    params = ModelParams.from_registry(scenario.initial_registry, scenario.workflow)
    config = scenario.initial_configuration
    if config is None:
        config = MapeController.for_scenario(scenario, ExactEngine()).initial_configuration
    out = {}
    for E, A in strategies:
        engine = SmcEngine(SmcStrategy(E, A, seed))
        times = []
        for _ in range(calls):
            t0 = time.perf_counter()
            engine.verify(scenario.workflow, config, params, scenario.requirements)
            times.append((time.perf_counter() - t0) * 1e6)
        out[EngineConfig("rsmc", E, A).label] = times
    return out
