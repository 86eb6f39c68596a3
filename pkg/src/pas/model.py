"""Domain types for the Tele Assistance System: services, registry, workflow,
configurations and requirements, plus the static S1/S2 selection rules."""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence


class ModelError(ValueError):
    """Raised when a domain object violates one of its invariants."""


class ServiceType(str, enum.Enum):
    ALARM = "Alarm"
    MEDICAL_ANALYSIS = "MedicalAnalysis"
    DRUG = "Drug"
    INFORM_RELATIVES = "InformRelatives"

    @classmethod
    def parse(cls, name: str) -> "ServiceType":
        key = name.strip()
        if key in _SHORT_NAMES:
            return _SHORT_NAMES[key]
        try:
            return cls(key)
        except ValueError:
            raise ModelError(f"unknown service type {name!r}") from None

    @property
    def short(self) -> str:
        return _SHORT_OF[self]


_SHORT_NAMES = {
    "A": ServiceType.ALARM,
    "M": ServiceType.MEDICAL_ANALYSIS,
    "D": ServiceType.DRUG,
    "IR": ServiceType.INFORM_RELATIVES,
}
_SHORT_OF = {v: k for k, v in _SHORT_NAMES.items()}

# Abstract operations the planner chooses bindings for, in canonical order.
CORE_OPERATIONS = (ServiceType.ALARM, ServiceType.MEDICAL_ANALYSIS, ServiceType.DRUG)
ALL_OPERATIONS = CORE_OPERATIONS + (ServiceType.INFORM_RELATIVES,)


class ServiceKey(NamedTuple):
    type: ServiceType
    id: int

    def __str__(self) -> str:
        return f"{self.type.value}:{self.id}"


def _check_probability(value: float, name: str) -> None:
    if not (isinstance(value, (int, float)) and math.isfinite(value) and 0.0 <= value <= 1.0):
        raise ModelError(f"{name} must be a probability in [0, 1], got {value!r}")


@dataclass(frozen=True)
class ConcreteService:
    id: int
    type: ServiceType
    failure_rate: float
    cost: float

    def __post_init__(self):
        if not isinstance(self.id, int) or isinstance(self.id, bool) or self.id < 1:
            raise ModelError(f"service id must be a positive integer, got {self.id!r}")
        if not isinstance(self.type, ServiceType):
            object.__setattr__(self, "type", ServiceType.parse(self.type))
        _check_probability(self.failure_rate, f"failure_rate of {self.type.value}:{self.id}")
        if not (math.isfinite(self.cost) and self.cost >= 0):
            raise ModelError(f"cost of {self.type.value}:{self.id} must be non-negative, got {self.cost!r}")

    @property
    def key(self) -> ServiceKey:
        return ServiceKey(self.type, self.id)


@dataclass(frozen=True)
class ServiceRegistry:
    """Advertised service profiles. Ids are unique per service type."""

    services: tuple[ConcreteService, ...]
    last_refresh: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "services", tuple(self.services))
        index = {}
        for s in self.services:
            index.setdefault(s.key, s)
        object.__setattr__(self, "_index", index)

    def of_type(self, service_type: ServiceType) -> list[ConcreteService]:
        return sorted((s for s in self.services if s.type is service_type), key=lambda s: s.id)

    def get(self, key: ServiceKey) -> ConcreteService:
        try:
            return self._index[key]
        except KeyError:
            raise ModelError(f"service {key} is not in the registry") from None

    def __contains__(self, key) -> bool:
        return key in self._index

    def keys(self) -> list[ServiceKey]:
        return sorted(self._index, key=lambda k: (ALL_OPERATIONS.index(k.type), k.id))

    def types(self) -> set[ServiceType]:
        return {s.type for s in self.services}

    def with_services(self, extra: Iterable[ConcreteService], refreshed_at: float | None = None) -> "ServiceRegistry":
        last = self.last_refresh if refreshed_at is None else refreshed_at
        return ServiceRegistry(self.services + tuple(extra), last)

    def profile(self) -> tuple:
        """Hashable content signature, used to detect refresh changes."""
        return tuple(sorted((s.type.value, s.id, s.failure_rate, s.cost) for s in self.services))


@dataclass(frozen=True)
class WorkflowSpec:
    """Branch structure of the TAS workflow.

    request_split is (vital_signs, emergency); analysis_split is (drug, alarm).
    """

    request_split: tuple[float, float] = (0.75, 0.25)
    analysis_split: tuple[float, float] = (0.66, 0.34)
    inform_relatives_enabled: bool = False

    def __post_init__(self):
        for name in ("request_split", "analysis_split"):
            pair = tuple(float(x) for x in getattr(self, name))
            if len(pair) != 2:
                raise ModelError(f"{name} must have two entries")
            for p in pair:
                _check_probability(p, name)
            if abs(pair[0] + pair[1] - 1.0) > 1e-12:
                raise ModelError(f"{name} must sum to 1, got {pair[0] + pair[1]!r}")
            object.__setattr__(self, name, pair)

    @property
    def p_vital(self) -> float:
        return self.request_split[0]

    @property
    def p_drug(self) -> float:
        return self.analysis_split[0]

    def operations(self) -> tuple[ServiceType, ...]:
        return ALL_OPERATIONS if self.inform_relatives_enabled else CORE_OPERATIONS

    def with_inform_relatives(self, enabled: bool = True) -> "WorkflowSpec":
        return WorkflowSpec(self.request_split, self.analysis_split, enabled)


@dataclass(frozen=True, eq=False)
class Configuration:
    """Ordered alternative-service binding per abstract operation.

    ``parallel`` lists operations whose alternatives are invoked in parallel
    (all charged) instead of retried in order.
    """

    binding: tuple[tuple[ServiceType, tuple[int, ...]], ...]
    parallel: frozenset = frozenset()

    def __post_init__(self):
        items = self.binding.items() if isinstance(self.binding, Mapping) else self.binding
        norm = {}
        for op, ids in items:
            op = op if isinstance(op, ServiceType) else ServiceType.parse(op)
            ids = tuple(int(i) for i in ids)
            if not ids:
                raise ModelError(f"binding for {op.value} is empty")
            if len(set(ids)) != len(ids):
                raise ModelError(f"binding for {op.value} repeats a service id: {list(ids)}")
            norm[op] = ids
        ordered = tuple((op, norm[op]) for op in ALL_OPERATIONS if op in norm)
        par = frozenset(p if isinstance(p, ServiceType) else ServiceType.parse(p) for p in self.parallel)
        self._init(ordered, par)

    def _init(self, ordered, par) -> None:
        object.__setattr__(self, "binding", ordered)
        object.__setattr__(self, "parallel", par)
        object.__setattr__(self, "_map", dict(ordered))
        object.__setattr__(self, "_depth", max(
            (len(ids) for op, ids in ordered if op is not ServiceType.INFORM_RELATIVES), default=1))

    @classmethod
    def _trusted(cls, ordered, parallel=frozenset()) -> "Configuration":
        # ordered, duplicate-free bindings produced by enumeration
        self = object.__new__(cls)
        self._init(ordered, parallel)
        return self

    def __eq__(self, other):
        if not isinstance(other, Configuration):
            return NotImplemented
        return self.binding == other.binding and self.parallel == other.parallel

    def __hash__(self):
        return hash((self.binding, self.parallel))

    @classmethod
    def of(cls, parallel=(), **ops: Sequence[int]) -> "Configuration":
        return cls(tuple((ServiceType.parse(k), tuple(v)) for k, v in ops.items()), frozenset(parallel))

    def __getitem__(self, op: ServiceType) -> tuple[int, ...]:
        return self._map[op]

    def get(self, op: ServiceType, default=None):
        return self._map.get(op, default)

    def operations(self) -> tuple[ServiceType, ...]:
        return tuple(op for op, _ in self.binding)

    def keys(self) -> list[ServiceKey]:
        return [ServiceKey(op, i) for op, ids in self.binding for i in ids]

    def depth(self) -> int:
        return self._depth

    def with_binding(self, op: ServiceType, ids: Sequence[int]) -> "Configuration":
        binding = dict(self.binding)
        binding[op] = tuple(ids)
        return Configuration(tuple(binding.items()), self.parallel)

    def without(self, op: ServiceType) -> "Configuration":
        return Configuration(tuple((k, v) for k, v in self.binding if k is not op), self.parallel - {op})

    def __str__(self) -> str:
        parts = []
        for op, ids in self.binding:
            mark = "|" if op in self.parallel else ","
            parts.append(f"{op.short}=[{mark.join(str(i) for i in ids)}]")
        return " ".join(parts)

    def to_dict(self) -> dict:
        out = {op.value: list(ids) for op, ids in self.binding}
        if self.parallel:
            out["parallel"] = sorted(p.value for p in self.parallel)
        return out

    def resolve(self, registry: ServiceRegistry) -> None:
        """Raise ModelError unless every bound id exists with the right type."""
        for key in self.keys():
            if key not in registry:
                raise ModelError(f"configuration references unknown service {key}")


@dataclass(frozen=True)
class RequirementSpec:
    max_failure_prob: float = 0.02
    max_avg_cost: float = 8.0
    pair_budget_X: float | None = None

    def __post_init__(self):
        _check_probability(self.max_failure_prob, "max_failure_prob")
        if not self.max_avg_cost >= 0:
            raise ModelError(f"max_avg_cost must be non-negative, got {self.max_avg_cost!r}")
        if self.pair_budget_X is not None:
            _check_probability(self.pair_budget_X, "pair_budget_X")


@dataclass
class ValidationResult:
    errors: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def __bool__(self) -> bool:
        return self.ok


def validate_registry(registry: ServiceRegistry, workflow: WorkflowSpec) -> ValidationResult:
    result = ValidationResult()
    seen: set[ServiceKey] = set()
    for s in registry.services:
        if s.key in seen:
            result.errors.append(f"duplicate id {s.id} within {s.type.value} (service {s.key})")
        seen.add(s.key)
    for op in workflow.operations():
        count = len(registry.of_type(op))
        need = 2 if op is ServiceType.ALARM else 1
        if count < need:
            result.errors.append(f"{op.value} requires >={need} instances, registry has {count}")
    return result


def select_s1(alarm_services: Sequence[ConcreteService]) -> int:
    """Static S1 choice: lowest advertised failure rate, then cost, then id."""
    if not alarm_services:
        raise ModelError("select_s1 needs at least one alarm service")
    best = min(alarm_services, key=lambda s: (s.failure_rate, s.cost, s.id))
    return best.id


@dataclass(frozen=True)
class PairSelection:
    feasible: bool
    medical_id: int | None = None
    alarm_id: int | None = None
    cost: float | None = None

    @property
    def pair(self) -> tuple[int, int] | None:
        return (self.medical_id, self.alarm_id) if self.feasible else None


def select_s2(medical: Sequence[ConcreteService], alarm: Sequence[ConcreteService], X: float) -> PairSelection:
    """Static S2 choice: cheapest (medical, alarm) pair with fr_m + fr_a <= X."""
    if not medical or not alarm:
        raise ModelError("select_s2 needs non-empty medical and alarm lists")
    best = None
    for m in medical:
        for a in alarm:
            # tolerance absorbs float noise in sums like 0.07 + 0.05
            if m.failure_rate + a.failure_rate > X + 1e-12:
                continue
            rank = (m.cost + a.cost, m.id, a.id)
            if best is None or rank < best:
                best = rank
    if best is None:
        return PairSelection(False)
    return PairSelection(True, best[1], best[2], best[0])


def operation_options(ids: Sequence[int], retry_depth: int) -> list[tuple[int, ...]]:
    """All ordered lists of 1..retry_depth distinct ids, singletons first."""
    ids = sorted(ids)
    out: list[tuple[int, ...]] = []
    for k in range(1, min(retry_depth, len(ids)) + 1):
        out.extend(itertools.permutations(ids, k))
    return out


def count_configurations(sizes: Iterable[int], retry_depth: int) -> int:
    total = 1
    for n in sizes:
        total *= sum(math.perm(n, k) for k in range(1, min(retry_depth, n) + 1))
    return total


def enumerate_configurations(
    registry: ServiceRegistry,
    workflow: WorkflowSpec,
    retry_depth: int = 2,
    options: Mapping[ServiceType, Sequence[tuple[int, ...]]] | None = None,
    fixed: Configuration | None = None,
) -> list[Configuration]:
    """Every configuration over the core operations, in deterministic order.

    ``options`` restricts the per-operation lists (used by candidate pruning);
    ``fixed`` supplies bindings carried unchanged into every candidate, e.g. the
    InformRelatives binding once that operation is part of the workflow.
    """
    if retry_depth < 1:
        raise ModelError("retry_depth must be >= 1")
    per_op = []
    for op in CORE_OPERATIONS:
        if options is not None and op in options:
            per_op.append(list(options[op]))
        else:
            per_op.append(operation_options([s.id for s in registry.of_type(op)], retry_depth))
    extra = ()
    if fixed is not None and workflow.inform_relatives_enabled:
        ir = fixed.get(ServiceType.INFORM_RELATIVES)
        if ir is not None:
            extra = ((ServiceType.INFORM_RELATIVES, ir),)
    make = Configuration._trusted
    return [make(tuple(zip(CORE_OPERATIONS, combo)) + extra) for combo in itertools.product(*per_op)]


TAS_SERVICES = {
    ServiceType.ALARM: [(1, 0.11, 4.0), (2, 0.04, 12.0), (3, 0.18, 2.0), (4, 0.08, 3.0), (5, 0.14, 5.0)],
    ServiceType.MEDICAL_ANALYSIS: [(1, 0.12, 4.0), (2, 0.07, 14.0), (3, 0.18, 2.0), (4, 0.10, 6.0), (5, 0.15, 3.0)],
    ServiceType.DRUG: [(1, 0.01, 5.0), (2, 0.03, 3.0), (3, 0.05, 2.0), (4, 0.07, 1.0), (5, 0.02, 4.0)],
}


def tas_registry() -> ServiceRegistry:
    """The five-instance third-party service profiles of the TAS scenario."""
    services = [ConcreteService(i, op, fr, c) for op, rows in TAS_SERVICES.items() for i, fr, c in rows]
    return ServiceRegistry(tuple(services))
