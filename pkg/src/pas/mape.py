"""MAPE-K feedback loop over the TAS workflow.

Monitor per-service success/failure windows, estimate failure rates with
confidence intervals, analyze candidate configurations with an assurance
engine, plan the cheapest compliant one and rebind between invocations.
"""

from __future__ import annotations

import json
import logging
import math
import time
from collections import deque
from dataclasses import dataclass, field

from .engine import AssuranceEngine, Compliance, Evidence, ModelParams, Verdict
from .model import (CORE_OPERATIONS, Configuration, ModelError, RequirementSpec, ServiceKey, ServiceRegistry,
                    ServiceType, WorkflowSpec, count_configurations, enumerate_configurations, operation_options)
from .trace import AdaptationRecord, IntegrationRecord, InvocationOutcome, VerificationRecord

log = logging.getLogger(__name__)

HOEFFDING_DELTA = 0.05


@dataclass(frozen=True)
class Estimate:
    point: float
    ci_low: float
    ci_high: float
    sample_count: int


class EvidenceLog:
    """Append-only audit trail of verifications and adaptations.

    Records are kept as tuples and rendered to JSON lines on demand, since a
    single analysis can verify thousands of candidates.
    """

    def __init__(self):
        self._records: list[tuple] = []

    def __len__(self) -> int:
        return len(self._records)

    def verification(self, clock: float, config: Configuration, digest: str, verdict: Verdict) -> None:
        self._records.append((clock, "verification", config, digest, verdict))

    def adaptation(self, clock: float, old: Configuration, new: Configuration, digest: str, result: dict,
                   wall_micros: float) -> None:
        self._records.append((clock, "adaptation", new, digest, dict(result, previous=str(old)), wall_micros))

    def note(self, clock: float, kind: str, config: Configuration | None, result: dict) -> None:
        self._records.append((clock, kind, config, "", result, 0.0))

    def entries(self) -> list[dict]:
        return [self._render(r) for r in self._records]

    def kinds(self) -> list[str]:
        return [r[1] for r in self._records]

    def to_lines(self) -> str:
        return "".join(json.dumps(e) + "\n" for e in self.entries())

    @staticmethod
    def _render(rec: tuple) -> dict:
        clock, kind, config = rec[0], rec[1], rec[2]
        if kind == "verification":
            v: Verdict = rec[4]
            result = {"failure_prob": v.failure_prob, "expected_cost": v.expected_cost,
                      "verdict": v.compliant.value, "method": v.evidence.method, "volume": v.evidence.volume}
            if v.ci_low is not None:
                result["interval"] = [v.ci_low, v.ci_high]
            wall = v.evidence.wall_micros
        else:
            result, wall = rec[4], rec[5]
        return {"clock": clock, "kind": kind, "configuration": str(config) if config is not None else None,
                "parameters_digest": rec[3], "result": result, "wall_micros": round(wall, 3)}


@dataclass
class Knowledge:
    registry: ServiceRegistry
    workflow: WorkflowSpec
    requirements: RequirementSpec
    configuration: Configuration
    window: int = 200
    tau: float = 0.02
    windows: dict = field(default_factory=dict)
    estimates: dict = field(default_factory=dict)
    planned_values: dict = field(default_factory=dict)
    dirty: set = field(default_factory=set)
    pending: set = field(default_factory=set)
    requests: deque = None
    analysis: deque = None
    next_tick: float = 0.0
    evidence: EvidenceLog = field(default_factory=EvidenceLog)

    def __post_init__(self):
        if self.requests is None:
            self.requests = deque(maxlen=self.window)
        if self.analysis is None:
            self.analysis = deque(maxlen=self.window)

    def window_of(self, key: ServiceKey) -> deque:
        w = self.windows.get(key)
        if w is None:
            w = self.windows[key] = deque(maxlen=self.window)
        return w

    def params(self) -> ModelParams:
        rates = {k: estimate_failure_rate(self, k).point for k in self.registry.keys()}
        p_vital = sum(self.requests) / len(self.requests) if self.requests else self.workflow.p_vital
        p_drug = sum(self.analysis) / len(self.analysis) if self.analysis else self.workflow.p_drug
        return ModelParams.from_registry(self.registry, self.workflow, rates, p_vital, p_drug)


def monitor_update(knowledge: Knowledge, outcome: InvocationOutcome) -> Knowledge:
    """Append each attempted invocation to its service's window."""
    for op, key, ok, _cost in outcome.steps:
        if key not in knowledge.registry:
            log.warning("outcome references unknown service %s; skipped", key)
            continue
        knowledge.window_of(key).append(0 if ok else 1)
        knowledge.estimates.pop(key, None)
        knowledge.dirty.add(key)
    knowledge.requests.append(1 if outcome.kind == "vital" else 0)
    if outcome.kind == "vital":
        steps = outcome.steps
        # the first step after a successful MedicalAnalysis reveals the branch taken
        for i, (op, _key, ok, _c) in enumerate(steps):
            if op is ServiceType.MEDICAL_ANALYSIS and ok:
                if i + 1 < len(steps):
                    knowledge.analysis.append(1 if steps[i + 1][0] is ServiceType.DRUG else 0)
                break
    return knowledge


def estimate_failure_rate(knowledge: Knowledge, key: ServiceKey, delta: float = HOEFFDING_DELTA) -> Estimate:
    """Laplace-smoothed point estimate with a Hoeffding interval.

    Falls back to the advertised rate, with interval [0, 1], before the first
    observation.
    """
    cached = knowledge.estimates.get(key)
    if cached is not None:
        return cached
    window = knowledge.windows.get(key)
    n = len(window) if window else 0
    if n == 0:
        est = Estimate(knowledge.registry.get(key).failure_rate, 0.0, 1.0, 0)
    else:
        failures = sum(window)
        point = (failures + 1) / (n + 2)
        half = math.sqrt(math.log(2.0 / delta) / (2.0 * n))
        est = Estimate(point, max(0.0, point - half), min(1.0, point + half), n)
    knowledge.estimates[key] = est
    return est


def _undecided(error: Exception) -> Verdict:
    return Verdict(math.nan, math.nan, Compliance.UNDECIDED, Evidence(f"error: {error}", 0, 0.0))


def analyze(knowledge: Knowledge, engine: AssuranceEngine, candidates: list[Configuration],
            clock: float = 0.0, params: ModelParams | None = None) -> list[tuple[Configuration, Verdict]]:
    """Verify every candidate with the current estimates as model parameters."""
    if not candidates:
        raise ModelError("analyze needs at least one candidate")
    params = params or knowledge.params()
    digest = params.digest()
    try:
        verdicts = engine.verify_many(knowledge.workflow, candidates, params, knowledge.requirements)
    except Exception:
        verdicts = []
        for c in candidates:
            try:
                verdicts.append(engine.verify(knowledge.workflow, c, params, knowledge.requirements))
            except Exception as exc:  # a broken candidate must not stop the loop
                log.warning("engine failed on %s: %s", c, exc)
                verdicts.append(_undecided(exc))
    for c, v in zip(candidates, verdicts):
        knowledge.evidence.verification(clock, c, digest, v)
    return list(zip(candidates, verdicts))


@dataclass(frozen=True)
class AdaptationPlan:
    configuration: Configuration
    verdict: Verdict
    index: int
    degraded: bool
    noop: bool


def plan(verdicts: list[tuple[Configuration, Verdict]], current: Configuration | None = None) -> AdaptationPlan:
    """Cheapest compliant candidate; if none, the one least likely to fail."""
    if not verdicts:
        raise ModelError("plan needs at least one verdict")
    compliant = [(v.expected_cost, v.failure_prob, i) for i, (_c, v) in enumerate(verdicts) if v.is_compliant]
    if compliant:
        _, _, idx = min(compliant)
        degraded = False
    else:
        ranked = [(v.failure_prob, v.expected_cost, i) for i, (_c, v) in enumerate(verdicts)
                  if not math.isnan(v.failure_prob)]
        idx = min(ranked)[2] if ranked else 0
        degraded = True
    config, verdict = verdicts[idx]
    return AdaptationPlan(config, verdict, idx, degraded, config == current)


def execute(adaptation: AdaptationPlan, knowledge: Knowledge, clock: float = 0.0,
            reason: str = "", wall_micros: float = 0.0) -> Knowledge:
    """Swap the active configuration; stale plans are dropped and re-analysis requested."""
    try:
        adaptation.configuration.resolve(knowledge.registry)
    except ModelError as exc:
        knowledge.pending.add("stale-plan")
        knowledge.evidence.note(clock, "discarded-plan", adaptation.configuration, {"error": str(exc)})
        return knowledge
    old = knowledge.configuration
    knowledge.configuration = adaptation.configuration
    knowledge.planned_values = {k: estimate_failure_rate(knowledge, k).point for k in knowledge.registry.keys()}
    knowledge.evidence.adaptation(clock, old, adaptation.configuration, "", {
        "reason": reason, "noop": adaptation.noop, "degraded": adaptation.degraded,
        "failure_prob": adaptation.verdict.failure_prob, "expected_cost": adaptation.verdict.expected_cost,
        "verdict": adaptation.verdict.compliant.value,
    }, wall_micros)
    return knowledge


def integrate_service_type(knowledge: Knowledge, services, clock: float = 0.0) -> Knowledge:
    """Add InformRelatives after every Alarm, bound to its cheapest instance."""
    services = [s for s in services if s.type is ServiceType.INFORM_RELATIVES]
    if not services:
        raise ModelError("no InformRelatives services to integrate")
    best = min(services, key=lambda s: (s.cost, s.id))
    current = knowledge.configuration.get(ServiceType.INFORM_RELATIVES)
    if knowledge.workflow.inform_relatives_enabled and current == (best.id,):
        return knowledge
    knowledge.workflow = knowledge.workflow.with_inform_relatives(True)
    knowledge.configuration = knowledge.configuration.with_binding(ServiceType.INFORM_RELATIVES, [best.id])
    knowledge.pending.add("workflow-extended")
    knowledge.evidence.note(clock, "integration", knowledge.configuration, {"service": str(best.key)})
    return knowledge


@dataclass(frozen=True)
class TriggerDecision:
    triggered: bool
    reasons: tuple[str, ...] = ()

    def __bool__(self):
        return self.triggered


def adaptation_trigger(knowledge: Knowledge, clock: float) -> TriggerDecision:
    """Decide whether to run an analysis now.

    Fires on an hourly tick, a changed registry, a requirement change, or when
    some service's confidence interval has left the ±tau band around the
    value used at the last planning.
    """
    reasons = set(knowledge.pending)
    if clock >= knowledge.next_tick:
        reasons.add("tick")
    for key in sorted(knowledge.dirty):
        used = knowledge.planned_values.get(key)
        if used is None:
            continue
        est = estimate_failure_rate(knowledge, key)
        if est.ci_high < used - knowledge.tau or est.ci_low > used + knowledge.tau:
            reasons.add("drift")
            break
    knowledge.dirty.clear()
    return TriggerDecision(bool(reasons), tuple(sorted(reasons)))


def prune_options(knowledge: Knowledge, op: ServiceType, retry_depth: int, keep: int) -> list[tuple[int, ...]]:
    """The ``keep`` most reliable and ``keep`` cheapest option lists of one operation."""
    ids = [s.id for s in knowledge.registry.of_type(op)]
    options = operation_options(ids, retry_depth)

    def fail(opt):
        return math.prod(estimate_failure_rate(knowledge, ServiceKey(op, i)).point for i in opt)

    def cost(opt):
        total, reach = 0.0, 1.0
        for i in opt:
            key = ServiceKey(op, i)
            total += reach * knowledge.registry.get(key).cost
            reach *= estimate_failure_rate(knowledge, key).point
        return total

    order = {o: n for n, o in enumerate(options)}
    chosen = set(sorted(options, key=lambda o: (fail(o), order[o]))[:keep])
    chosen |= set(sorted(options, key=lambda o: (cost(o), order[o]))[:keep])
    return sorted(chosen, key=order.__getitem__)


def generate_candidates(knowledge: Knowledge, retry_depth: int, max_candidates: int = 20000,
                        keep: int = 6) -> list[Configuration]:
    sizes = [len(knowledge.registry.of_type(op)) for op in CORE_OPERATIONS]
    fixed = knowledge.configuration
    if count_configurations(sizes, retry_depth) <= max_candidates:
        return enumerate_configurations(knowledge.registry, knowledge.workflow, retry_depth, fixed=fixed)
    options = {op: prune_options(knowledge, op, retry_depth, keep) for op in CORE_OPERATIONS}
    return enumerate_configurations(knowledge.registry, knowledge.workflow, retry_depth, options, fixed=fixed)


class MapeController:
    """Runs the loop inside a simulated episode.

    Callbacks return trace records. Analysis happens synchronously between
    invocations, so a rebinding never interrupts a running workflow.
    """

    def __init__(self, engine: AssuranceEngine, workflow: WorkflowSpec, configuration: Configuration,
                 retry_depth: int = 2, window: int = 200, tau: float = 0.02, max_candidates: int = 20000,
                 prune_keep: int = 6, engine_label: str | None = None):
        self.engine = engine
        self.retry_depth = retry_depth
        self.max_candidates = max_candidates
        self.prune_keep = prune_keep
        self.engine_label = engine_label or engine.name
        self._initial = (workflow, configuration, window, tau)
        self.knowledge: Knowledge | None = None
        self._candidates = None
        self._candidate_key = None

    @classmethod
    def for_scenario(cls, scenario, engine: AssuranceEngine, engine_label: str | None = None) -> "MapeController":
        from .model import select_s1
        s = scenario.adaptation
        config = scenario.initial_configuration
        if config is None:
            reg = scenario.initial_registry
            config = Configuration.of(
                A=[select_s1(reg.of_type(ServiceType.ALARM))],
                M=[select_s1(reg.of_type(ServiceType.MEDICAL_ANALYSIS))],
                D=[select_s1(reg.of_type(ServiceType.DRUG))],
            )
        return cls(engine, scenario.workflow, config, s.retry_depth, s.window, s.tau, s.max_candidates,
                   s.prune_keep, engine_label)

    @property
    def configuration(self) -> Configuration:
        return self.knowledge.configuration

    @property
    def initial_configuration(self) -> Configuration:
        return self._initial[1]

    @property
    def workflow(self) -> WorkflowSpec:
        return self.knowledge.workflow

    def start(self, clock, registry, requirements):
        workflow, config, window, tau = self._initial
        self.knowledge = Knowledge(registry, workflow, requirements, config, window, tau)
        return []

    def on_outcome(self, outcome):
        monitor_update(self.knowledge, outcome)
        return self._maybe_cycle(outcome.clock)

    def on_tick(self, clock):
        return self._maybe_cycle(clock)

    def on_refresh(self, clock, registry):
        k = self.knowledge
        if registry.profile() != k.registry.profile():
            k.registry = registry
            k.estimates.clear()
            k.pending.add("refresh")
        else:
            k.registry = registry
        return self._maybe_cycle(clock)

    def on_requirements(self, clock, requirements):
        self.knowledge.requirements = requirements
        self.knowledge.pending.add("requirements")
        return self._maybe_cycle(clock)

    def on_new_service_type(self, clock, event):
        k = self.knowledge
        before = (k.workflow, k.configuration)
        integrate_service_type(k, event.services, clock)
        records = []
        if (k.workflow, k.configuration) != before:
            ir = k.configuration.get(ServiceType.INFORM_RELATIVES)
            records.append(IntegrationRecord(clock, event.time, event.deadline,
                                             str(ServiceKey(ServiceType.INFORM_RELATIVES, ir[0]))))
        return records + self._maybe_cycle(clock)

    def _maybe_cycle(self, clock):
        decision = adaptation_trigger(self.knowledge, clock)
        if not decision:
            return []
        return self.cycle(clock, ",".join(decision.reasons))

    def candidates(self) -> list[Configuration]:
        k = self.knowledge
        key = (k.registry.profile(), k.workflow, k.configuration.get(ServiceType.INFORM_RELATIVES))
        sizes = [len(k.registry.of_type(op)) for op in CORE_OPERATIONS]
        if count_configurations(sizes, self.retry_depth) > self.max_candidates:
            return generate_candidates(k, self.retry_depth, self.max_candidates, self.prune_keep)
        if key != self._candidate_key:
            self._candidates = generate_candidates(k, self.retry_depth, self.max_candidates, self.prune_keep)
            self._candidate_key = key
        return self._candidates

    def cycle(self, clock: float, reason: str = "") -> list:
        """One analyze-plan-execute round; returns its trace records."""
        k = self.knowledge
        start = time.perf_counter()
        k.pending.clear()
        while k.next_tick <= clock:
            k.next_tick += 1.0
        candidates = self.candidates()
        verify_start = time.perf_counter()
        verdicts = analyze(k, self.engine, candidates, clock)
        verify_wall = (time.perf_counter() - verify_start) * 1e6
        chosen = plan(verdicts, k.configuration)
        old = k.configuration
        latency = (time.perf_counter() - start) * 1e6
        execute(chosen, k, clock, reason, latency)
        latency = (time.perf_counter() - start) * 1e6
        volume = sum(v.evidence.volume for _, v in verdicts)
        compliant = sum(1 for _, v in verdicts if v.is_compliant)
        return [
            VerificationRecord(clock, self.engine_label, len(candidates), volume, verify_wall, compliant, reason),
            AdaptationRecord(clock, str(old), str(k.configuration), reason, latency, chosen.degraded, chosen.noop),
        ]
