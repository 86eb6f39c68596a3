"""Seeded discrete-event simulation of the TAS environment.

The simulator owns the hidden true world (actual failure rates and request
mix). Controllers only ever receive advertised registry snapshots, scripted
requirement changes and invocation outcomes.
"""

from __future__ import annotations

import logging
import random
import time
from dataclasses import dataclass, field, replace
from typing import Union

from .model import (ConcreteService, Configuration, ModelError, RequirementSpec, ServiceKey, ServiceRegistry,
                    WorkflowSpec, validate_registry)
from .semantics import walk, workflow_graph
from .trace import EventRecord, InvocationOutcome, TraceLog

log = logging.getLogger(__name__)


class ConfigurationError(ModelError):
    """A configuration references a service the world does not provide."""


class EpisodeAborted(RuntimeError):
    def __init__(self, message: str, trace: TraceLog):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class NewService:
    time: float
    service: ConcreteService


@dataclass(frozen=True)
class NewServiceType:
    time: float
    services: tuple[ConcreteService, ...]
    deadline: float

    def __post_init__(self):
        object.__setattr__(self, "services", tuple(self.services))
        if not self.services:
            raise ModelError("NewServiceType needs at least one service")
        if self.deadline < 0:
            raise ModelError("NewServiceType deadline must be non-negative")


@dataclass(frozen=True)
class RequirementChange:
    time: float
    requirements: RequirementSpec


@dataclass(frozen=True)
class RateShift:
    time: float
    service: ServiceKey
    failure_rate: float

    def __post_init__(self):
        if not 0.0 <= self.failure_rate <= 1.0:
            raise ModelError(f"RateShift failure_rate must be in [0, 1], got {self.failure_rate!r}")


ScenarioEvent = Union[NewService, NewServiceType, RequirementChange, RateShift]
EVENT_KINDS = {NewService: "NewService", NewServiceType: "NewServiceType",
               RequirementChange: "RequirementChange", RateShift: "RateShift"}


@dataclass(frozen=True)
class AdaptationSettings:
    retry_depth: int = 2
    window: int = 200
    tau: float = 0.02
    max_candidates: int = 20000
    prune_keep: int = 6

    def __post_init__(self):
        if self.retry_depth < 1 or self.window < 1 or self.max_candidates < 1 or self.prune_keep < 1:
            raise ModelError("adaptation settings must be positive")
        if self.tau < 0:
            raise ModelError("tau must be non-negative")


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    initial_registry: ServiceRegistry
    workflow: WorkflowSpec = field(default_factory=WorkflowSpec)
    requirements: RequirementSpec = field(default_factory=RequirementSpec)
    initial_configuration: Configuration | None = None
    horizon_hours: float = 5.0
    mean_invocations_per_hour: float = 1000.0
    arrivals: str = "poisson"
    drift_sigma: float = 0.0
    request_drift_sigma: float = 0.0
    refresh_period_T: float = 1.0
    events: tuple = ()
    seed: int = 0
    adaptation: AdaptationSettings = field(default_factory=AdaptationSettings)

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))

    def validate(self) -> list[str]:
        errors = []
        if not self.horizon_hours > 0:
            errors.append("horizon_hours must be > 0")
        if not self.mean_invocations_per_hour > 0:
            errors.append("mean_invocations_per_hour must be > 0")
        if self.arrivals not in ("poisson", "fixed"):
            errors.append(f"arrivals must be 'poisson' or 'fixed', got {self.arrivals!r}")
        if self.drift_sigma < 0:
            errors.append("drift_sigma must be >= 0")
        if self.request_drift_sigma < 0:
            errors.append("request_drift_sigma must be >= 0")
        if not self.refresh_period_T > 0:
            errors.append("refresh_period_T must be > 0")
        times = [e.time for e in self.events]
        if times != sorted(times):
            errors.append("events must be sorted by time")
        for e in self.events:
            if not 0 <= e.time <= self.horizon_hours:
                errors.append(f"event at {e.time} lies outside [0, horizon]")
        errors.extend(validate_registry(self.initial_registry, self.workflow).errors)
        if self.initial_configuration is not None:
            try:
                self.initial_configuration.resolve(self.initial_registry)
            except ModelError as exc:
                errors.append(f"initial_configuration: {exc}")
        return errors

    def with_seed(self, seed: int) -> "ScenarioSpec":
        return replace(self, seed=seed)


@dataclass
class TrueWorldState:
    """Hidden environment state; controllers never see this object."""

    true_failure_rates: dict
    true_request_split: tuple[float, float]
    clock: float
    registry: ServiceRegistry

    def rate(self, key: ServiceKey) -> float:
        return self.true_failure_rates[key]

    def cost(self, key: ServiceKey) -> float:
        return self.registry.get(key).cost


def rng_streams(seed: int) -> dict[str, random.Random]:
    """Independent named streams so that consumers do not perturb each other."""
    return {p: random.Random(f"pas/{seed}/{p}") for p in ("arrivals", "requests", "outcomes", "drift")}


def init_world(scenario: ScenarioSpec) -> TrueWorldState:
    errors = scenario.validate()
    if errors:
        raise ModelError("invalid scenario: " + "; ".join(errors))
    reg = scenario.initial_registry
    return TrueWorldState({s.key: s.failure_rate for s in reg.services}, scenario.workflow.request_split, 0.0, reg)


def _clamp(x: float) -> float:
    return 0.0 if x < 0.0 else 1.0 if x > 1.0 else x


def drift(world: TrueWorldState, scenario: ScenarioSpec, rng: random.Random) -> TrueWorldState:
    """One hour of random-walk drift in the true rates and the request mix."""
    rates = dict(world.true_failure_rates)
    if scenario.drift_sigma > 0:
        for key in sorted(rates, key=lambda k: (k.type.value, k.id)):
            rates[key] = _clamp(rates[key] + rng.gauss(0.0, scenario.drift_sigma))
    split = world.true_request_split
    if scenario.request_drift_sigma > 0:
        v = max(0.0, split[0] + rng.gauss(0.0, scenario.request_drift_sigma))
        e = max(0.0, split[1] + rng.gauss(0.0, scenario.request_drift_sigma))
        total = v + e
        split = (v / total, e / total) if total > 0 else (0.5, 0.5)
    return replace(world, true_failure_rates=rates, true_request_split=split)


def generate_request(world: TrueWorldState, rng: random.Random) -> str:
    return "vital" if rng.random() < world.true_request_split[0] else "emergency"


def execute_workflow(world: TrueWorldState, workflow: WorkflowSpec, config: Configuration,
                     rng: random.Random, kind: str | None = None) -> InvocationOutcome:
    """Run one invocation against the true world.

    When ``kind`` is given the request type is fixed, otherwise it is drawn
    from the true request split using ``rng``.
    """
    for key in config.keys():
        if key not in world.true_failure_rates:
            raise ConfigurationError(f"configuration references unknown service {key}")
    if kind is None:
        kind = generate_request(world, rng)
    request = workflow_graph(workflow)
    root = request.yes if kind == "vital" else request.no
    split = {"p_vital": world.true_request_split[0], "p_drug": workflow.p_drug}
    steps: list = []
    failed, total = walk(root, config, world.rate, world.cost, split.__getitem__,
                         lambda _slot: rng.random(), None, steps)
    return InvocationOutcome(world.clock, kind, tuple(steps), failed, total)


class StaticController:
    """Keeps one configuration forever; useful as a baseline and in tests."""

    def __init__(self, configuration: Configuration, workflow: WorkflowSpec):
        self.configuration = configuration
        self.workflow = workflow
        self.engine_label = "static"

    def start(self, clock, registry, requirements):
        return []

    def on_outcome(self, outcome):
        return []

    def on_tick(self, clock):
        return []

    def on_refresh(self, clock, registry):
        return []

    def on_requirements(self, clock, requirements):
        return []

    def on_new_service_type(self, clock, event):
        return []


# tie order for simultaneous happenings: scripted event, refresh, hourly tick, arrival
_EVENT, _REFRESH, _TICK, _ARRIVAL = range(4)


def run_episode(scenario: ScenarioSpec, controller=None, engine=None) -> TraceLog:
    """Simulate one episode and return its trace.

    ``controller`` receives outcomes and registry snapshots only. When it is
    omitted a MAPE-K controller is built around ``engine``.
    """
    if controller is None:
        from .mape import MapeController  # local import: mape depends on this module
        controller = MapeController.for_scenario(scenario, engine)
    wall_start = time.perf_counter()
    world = init_world(scenario)
    streams = rng_streams(scenario.seed)
    trace = TraceLog(scenario.name, scenario.seed, getattr(controller, "engine_label", "?"), scenario.horizon_hours)
    horizon = scenario.horizon_hours
    rate = scenario.mean_invocations_per_hour
    events = list(scenario.events)
    pending_types: list[NewServiceType] = []
    snapshot = replace(scenario.initial_registry, last_refresh=0.0)

    def feed(records):
        for r in records:
            trace.add(r)

    try:
        feed(controller.start(0.0, snapshot, scenario.requirements))
        next_refresh = scenario.refresh_period_T
        next_tick = 0.0
        k_arrival = 0
        if scenario.arrivals == "fixed":
            next_arrival = 0.0
        else:
            next_arrival = streams["arrivals"].expovariate(rate)
        ei = 0
        while True:
            candidates = [(next_refresh, _REFRESH), (next_tick, _TICK), (next_arrival, _ARRIVAL)]
            if ei < len(events):
                candidates.append((events[ei].time, _EVENT))
            t, what = min(candidates)
            if t >= horizon:
                break
            world.clock = t
            if what == _EVENT:
                ev = events[ei]
                ei += 1
                world = _apply_event(world, ev, pending_types)
                world.clock = t
                trace.add(EventRecord(t, EVENT_KINDS[type(ev)], _event_detail(ev)))
                if isinstance(ev, RequirementChange):
                    feed(controller.on_requirements(t, ev.requirements))
            elif what == _REFRESH:
                snapshot = replace(world.registry, last_refresh=t)
                trace.add(EventRecord(t, "refresh", {"services": len(snapshot.services)}))
                feed(controller.on_refresh(t, snapshot))
                ready = [e for e in pending_types if e.time <= t]
                for e in ready:
                    pending_types.remove(e)
                    feed(controller.on_new_service_type(t, e))
                next_refresh = t + scenario.refresh_period_T
            elif what == _TICK:
                if t > 0:
                    world = drift(world, scenario, streams["drift"])
                    world.clock = t
                feed(controller.on_tick(t))
                next_tick = t + 1.0
            else:
                kind = generate_request(world, streams["requests"])
                outcome = execute_workflow(world, controller.workflow, controller.configuration,
                                           streams["outcomes"], kind)
                trace.arrivals += 1
                trace.add(outcome)
                feed(controller.on_outcome(outcome))
                k_arrival += 1
                if scenario.arrivals == "fixed":
                    next_arrival = k_arrival / rate
                else:
                    next_arrival = t + streams["arrivals"].expovariate(rate)
    except Exception as exc:
        trace.aborted = f"{type(exc).__name__}: {exc}"
        trace.wall_micros = (time.perf_counter() - wall_start) * 1e6
        log.error("episode %s aborted at t=%.4f: %s", scenario.name, world.clock, exc)
        raise EpisodeAborted(trace.aborted, trace) from exc
    trace.wall_micros = (time.perf_counter() - wall_start) * 1e6
    return trace


def _apply_event(world: TrueWorldState, ev, pending_types: list) -> TrueWorldState:
    if isinstance(ev, NewService):
        rates = dict(world.true_failure_rates)
        rates[ev.service.key] = ev.service.failure_rate
        return replace(world, true_failure_rates=rates, registry=world.registry.with_services([ev.service]))
    if isinstance(ev, NewServiceType):
        rates = dict(world.true_failure_rates)
        for s in ev.services:
            rates[s.key] = s.failure_rate
        pending_types.append(ev)
        return replace(world, true_failure_rates=rates, registry=world.registry.with_services(ev.services))
    if isinstance(ev, RateShift):
        if ev.service not in world.true_failure_rates:
            raise ConfigurationError(f"RateShift targets unknown service {ev.service}")
        rates = dict(world.true_failure_rates)
        rates[ev.service] = ev.failure_rate
        return replace(world, true_failure_rates=rates)
    return world


def _event_detail(ev) -> dict:
    if isinstance(ev, NewService):
        return {"service": str(ev.service.key)}
    if isinstance(ev, NewServiceType):
        return {"services": [str(s.key) for s in ev.services], "deadline": ev.deadline}
    if isinstance(ev, RateShift):
        return {"service": str(ev.service), "failure_rate": ev.failure_rate}
    return {"max_failure_prob": ev.requirements.max_failure_prob, "max_avg_cost": ev.requirements.max_avg_cost}
