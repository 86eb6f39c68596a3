"""Types shared by the verification engines."""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .model import Configuration, ModelError, RequirementSpec, ServiceKey, ServiceRegistry, WorkflowSpec, _check_probability
from .semantics import P_DRUG, P_VITAL


class Compliance(str, enum.Enum):
    COMPLIANT = "Compliant"
    VIOLATING = "Violating"
    UNDECIDED = "Undecided"


def rate_variable(key: ServiceKey) -> str:
    return f"f[{key}]"


@dataclass(frozen=True)
class ModelParams:
    """Values the workflow model is instantiated with.

    Costs are carried alongside the failure rates because every attempt
    transition is rewarded with its service's cost.
    """

    failure_rate: Mapping[ServiceKey, float]
    cost: Mapping[ServiceKey, float]
    p_vital: float = 0.75
    p_drug: float = 0.66

    def __post_init__(self):
        for key, p in self.failure_rate.items():
            _check_probability(p, f"failure rate of {key}")
        _check_probability(self.p_vital, P_VITAL)
        _check_probability(self.p_drug, P_DRUG)

    @classmethod
    def from_registry(
        cls,
        registry: ServiceRegistry,
        workflow: WorkflowSpec,
        rates: Mapping[ServiceKey, float] | None = None,
        p_vital: float | None = None,
        p_drug: float | None = None,
    ) -> "ModelParams":
        fr = {s.key: s.failure_rate for s in registry.services}
        if rates:
            fr.update(rates)
        return cls(
            fr,
            {s.key: s.cost for s in registry.services},
            workflow.p_vital if p_vital is None else p_vital,
            workflow.p_drug if p_drug is None else p_drug,
        )

    def rate(self, key: ServiceKey) -> float:
        try:
            return self.failure_rate[key]
        except KeyError:
            raise ModelError(f"no failure rate for {key}") from None

    def cost_of(self, key: ServiceKey) -> float:
        try:
            return self.cost[key]
        except KeyError:
            raise ModelError(f"no cost for {key}") from None

    def split(self, name: str) -> float:
        if name == P_VITAL:
            return self.p_vital
        if name == P_DRUG:
            return self.p_drug
        raise ModelError(f"unknown split parameter {name!r}")

    def variables(self) -> dict[str, float]:
        """Values keyed by polynomial variable name."""
        out = {rate_variable(k): v for k, v in self.failure_rate.items()}
        out[P_VITAL] = self.p_vital
        out[P_DRUG] = self.p_drug
        return out

    def digest(self) -> str:
        payload = {
            "rates": sorted((str(k), v) for k, v in self.failure_rate.items()),
            "costs": sorted((str(k), v) for k, v in self.cost.items()),
            "splits": [self.p_vital, self.p_drug],
        }
        return hashlib.sha256(json.dumps(payload).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Evidence:
    method: str
    volume: int
    wall_micros: float


@dataclass(frozen=True)
class Verdict:
    failure_prob: float
    expected_cost: float
    compliant: Compliance
    evidence: Evidence
    ci_low: float | None = None
    ci_high: float | None = None

    @property
    def is_compliant(self) -> bool:
        return self.compliant is Compliance.COMPLIANT


class AssuranceEngine:
    """Interface of a verification engine.

    ``verify`` checks one configuration. ``verify_many`` checks a candidate
    list and returns verdicts in candidate order; engines override it when they
    can share work across candidates.
    """

    name = "engine"
    deterministic = True

    def verify(self, workflow: WorkflowSpec, config: Configuration, params: ModelParams,
               requirements: RequirementSpec) -> Verdict:
        raise NotImplementedError

    def verify_many(self, workflow: WorkflowSpec, configs: Sequence[Configuration], params: ModelParams,
                    requirements: RequirementSpec) -> list[Verdict]:
        return [self.verify(workflow, c, params, requirements) for c in configs]

    def describe(self) -> dict:
        return {"engine": self.name}


@dataclass
class EngineConfig:
    """Engine selection as it appears in suite files and on the command line."""

    engine: str
    E: float | None = None
    A: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def label(self) -> str:
        if self.engine == "rsmc":
            return f"rsmc(E={self.E:g},A={self.A:g})"
        return self.engine
