"""Per-episode audit records."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any


@dataclass(slots=True)
class InvocationOutcome:
    clock: float
    kind: str  # "vital" | "emergency"
    steps: tuple  # (operation, ServiceKey, succeeded, cost charged)
    workflow_failed: bool
    total_cost: float

    def to_record(self) -> dict:
        return {
            "clock": self.clock,
            "kind": "invocation",
            "request": self.kind,
            "steps": [[op.value, key.id, ok, cost] for op, key, ok, cost in self.steps],
            "failed": self.workflow_failed,
            "cost": self.total_cost,
        }


@dataclass(slots=True)
class VerificationRecord:
    """One analysis round: the engine checked ``calls`` candidates."""

    clock: float
    engine: str
    calls: int
    volume: int
    wall_micros: float
    compliant: int
    reason: str = ""

    def to_record(self) -> dict:
        return {"clock": self.clock, "kind": "verification", "engine": self.engine, "calls": self.calls,
                "volume": self.volume, "wall_micros": round(self.wall_micros, 3), "compliant": self.compliant,
                "reason": self.reason}


@dataclass(slots=True)
class AdaptationRecord:
    clock: float
    old: str
    new: str
    reason: str
    latency_micros: float
    degraded: bool
    noop: bool

    def to_record(self) -> dict:
        return {"clock": self.clock, "kind": "adaptation", "old": self.old, "new": self.new,
                "reason": self.reason, "latency_micros": round(self.latency_micros, 3),
                "degraded": self.degraded, "noop": self.noop}


@dataclass(slots=True)
class EventRecord:
    clock: float
    event: str
    detail: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        return {"clock": self.clock, "kind": "event", "event": self.event, **self.detail}


@dataclass(slots=True)
class IntegrationRecord:
    """When a new service type was wired into the workflow."""

    clock: float
    event_time: float
    deadline: float
    service: str

    @property
    def met_deadline(self) -> bool:
        return self.clock - self.event_time <= self.deadline + 1e-9

    def to_record(self) -> dict:
        return {"clock": self.clock, "kind": "integration", "event_time": self.event_time,
                "deadline": self.deadline, "service": self.service, "met_deadline": self.met_deadline}


@dataclass
class TraceLog:
    scenario: str
    seed: int
    engine: str
    horizon_hours: float
    invocations: list = field(default_factory=list)
    verifications: list = field(default_factory=list)
    adaptations: list = field(default_factory=list)
    events: list = field(default_factory=list)
    integrations: list = field(default_factory=list)
    arrivals: int = 0
    wall_micros: float = 0.0
    aborted: str | None = None
    metadata: dict[str, Any] = field(default_factory=dict)

    def add(self, record) -> None:
        if isinstance(record, VerificationRecord):
            self.verifications.append(record)
        elif isinstance(record, AdaptationRecord):
            self.adaptations.append(record)
        elif isinstance(record, IntegrationRecord):
            self.integrations.append(record)
        elif isinstance(record, EventRecord):
            self.events.append(record)
        elif isinstance(record, InvocationOutcome):
            self.invocations.append(record)
        else:
            raise TypeError(f"unknown trace record {record!r}")

    def records(self) -> list:
        """All records merged by clock; stable within equal clocks."""
        groups = (self.events, self.integrations, self.verifications, self.adaptations, self.invocations)
        merged = [(r.clock, g, i, r) for g, recs in enumerate(groups) for i, r in enumerate(recs)]
        merged.sort(key=lambda x: (x[0], x[1], x[2]))
        return [r for *_, r in merged]

    def to_jsonl(self) -> str:
        head = {"kind": "episode", "scenario": self.scenario, "seed": self.seed, "engine": self.engine,
                "horizon_hours": self.horizon_hours, "arrivals": self.arrivals, "aborted": self.aborted}
        lines = [json.dumps(head)]
        lines.extend(json.dumps(r.to_record()) for r in self.records())
        return "\n".join(lines) + "\n"
