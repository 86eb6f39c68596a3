"""Strict JSON encoding of scenarios and benchmark suites.

Unknown fields are rejected and every validation problem is reported with its
field path. ``dumps_scenario`` writes fields in one canonical order, so a
parsed file re-serializes byte-for-byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

from .engine import EngineConfig
from .model import (ConcreteService, Configuration, ModelError, RequirementSpec, ServiceKey, ServiceRegistry,
                    ServiceType, WorkflowSpec)
from .simulator import (AdaptationSettings, NewService, NewServiceType, RateShift, RequirementChange, ScenarioSpec)


class ScenarioError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class _Reader:
    """Collects field errors instead of stopping at the first one."""

    def __init__(self):
        self.errors: list[str] = []

    def fail(self, path: str, msg: str):
        self.errors.append(f"{path}: {msg}")

    def obj(self, value, path: str, allowed: set[str], required: set[str] = frozenset()) -> dict:
        if not isinstance(value, dict):
            self.fail(path, f"expected an object, got {type(value).__name__}")
            return {}
        for key in sorted(set(value) - allowed):
            self.fail(f"{path}.{key}", "unknown field")
        for key in sorted(required - set(value)):
            self.fail(f"{path}.{key}", "missing required field")
        return value

    def number(self, d: dict, key: str, path: str, default=None, *, lo=None, hi=None, integer=False):
        if key not in d:
            return default
        v = d[key]
        ok_type = isinstance(v, int) if integer else isinstance(v, (int, float))
        if isinstance(v, bool) or not ok_type:
            self.fail(f"{path}.{key}", f"expected {'an integer' if integer else 'a number'}, got {v!r}")
            return default
        if lo is not None and v < lo:
            self.fail(f"{path}.{key}", f"must be >= {lo}, got {v!r}")
            return default
        if hi is not None and v > hi:
            self.fail(f"{path}.{key}", f"must be <= {hi}, got {v!r}")
            return default
        return v if integer else float(v)

    def string(self, d: dict, key: str, path: str, default=None, choices=None):
        if key not in d:
            return default
        v = d[key]
        if not isinstance(v, str):
            self.fail(f"{path}.{key}", f"expected a string, got {v!r}")
            return default
        if choices and v not in choices:
            self.fail(f"{path}.{key}", f"must be one of {sorted(choices)}, got {v!r}")
            return default
        return v

    def boolean(self, d: dict, key: str, path: str, default=False):
        if key not in d:
            return default
        v = d[key]
        if not isinstance(v, bool):
            self.fail(f"{path}.{key}", f"expected true/false, got {v!r}")
            return default
        return v

    def guard(self, path: str, build):
        try:
            return build()
        except (ModelError, ValueError, TypeError) as exc:
            self.fail(path, str(exc))
            return None


_SERVICE_FIELDS = {"type", "id", "failure_rate", "cost"}


def _service(r: _Reader, raw, path: str, require_rate=True) -> ConcreteService | None:
    d = r.obj(raw, path, _SERVICE_FIELDS, {"type", "id", "cost"} | ({"failure_rate"} if require_rate else set()))
    typ = r.string(d, "type", path, choices={t.value for t in ServiceType})
    sid = r.number(d, "id", path, integer=True, lo=1)
    fr = r.number(d, "failure_rate", path, 0.0, lo=0.0, hi=1.0)
    cost = r.number(d, "cost", path, lo=0.0)
    if typ is None or sid is None or fr is None or cost is None:
        return None
    return r.guard(path, lambda: ConcreteService(sid, ServiceType(typ), fr, cost))


def _split(r: _Reader, d: dict, key: str, names: tuple[str, str], path: str, default):
    if key not in d:
        return default
    sub = r.obj(d[key], f"{path}.{key}", set(names), set(names))
    a = r.number(sub, names[0], f"{path}.{key}", lo=0.0, hi=1.0)
    b = r.number(sub, names[1], f"{path}.{key}", lo=0.0, hi=1.0)
    if a is None or b is None:
        return default
    return (a, b)


def _requirements(r: _Reader, raw, path: str) -> RequirementSpec | None:
    d = r.obj(raw, path, {"max_failure_prob", "max_avg_cost", "pair_budget"})
    mf = r.number(d, "max_failure_prob", path, 0.02, lo=0.0, hi=1.0)
    mc = r.number(d, "max_avg_cost", path, 8.0, lo=0.0)
    x = r.number(d, "pair_budget", path, None, lo=0.0, hi=1.0)
    return r.guard(path, lambda: RequirementSpec(mf, mc, x))


def parse_configuration(raw, path: str = "configuration", reader: _Reader | None = None) -> Configuration | None:
    r = reader or _Reader()
    allowed = {t.value for t in ServiceType} | {"parallel"}
    d = r.obj(raw, path, allowed)
    binding = {}
    for op in ServiceType:
        if op.value in d:
            ids = d[op.value]
            if not isinstance(ids, list) or not all(isinstance(i, int) and not isinstance(i, bool) for i in ids):
                r.fail(f"{path}.{op.value}", f"expected a list of integer ids, got {ids!r}")
                continue
            binding[op] = ids
    parallel = d.get("parallel", [])
    if not isinstance(parallel, list) or not all(p in {t.value for t in ServiceType} for p in parallel):
        r.fail(f"{path}.parallel", f"expected a list of operation names, got {parallel!r}")
        parallel = []
    config = r.guard(path, lambda: Configuration(tuple(binding.items()), frozenset(parallel)))
    if reader is None and r.errors:
        raise ScenarioError(r.errors)
    return config


def parse_config_flag(text: str) -> Configuration:
    """``A=4,1;M=4,2;D=4,1`` (long operation names accepted too)."""
    binding = {}
    try:
        for part in filter(None, (p.strip() for p in text.split(";"))):
            op, _, ids = part.partition("=")
            binding[ServiceType.parse(op)] = [int(i) for i in ids.split(",") if i.strip()]
        return Configuration(tuple(binding.items()))
    except (ModelError, ValueError) as exc:
        raise ScenarioError([f"--config: {exc}"]) from None


def _event(r: _Reader, raw, path: str):
    if not isinstance(raw, dict):
        r.fail(path, "expected an object")
        return None
    kind = raw.get("kind")
    shapes = {
        "NewService": {"time", "kind", "service"},
        "NewServiceType": {"time", "kind", "services", "deadline"},
        "RequirementChange": {"time", "kind", "requirements"},
        "RateShift": {"time", "kind", "service", "failure_rate"},
    }
    if kind not in shapes:
        r.fail(f"{path}.kind", f"must be one of {sorted(shapes)}, got {kind!r}")
        return None
    d = r.obj(raw, path, shapes[kind], shapes[kind])
    t = r.number(d, "time", path, lo=0.0)
    if t is None:
        return None
    if kind == "NewService":
        s = _service(r, d.get("service"), f"{path}.service")
        return s and NewService(t, s)
    if kind == "NewServiceType":
        raws = d.get("services")
        if not isinstance(raws, list) or not raws:
            r.fail(f"{path}.services", "expected a non-empty list")
            return None
        services = [_service(r, s, f"{path}.services[{i}]") for i, s in enumerate(raws)]
        deadline = r.number(d, "deadline", path, lo=0.0)
        if None in services or deadline is None:
            return None
        return r.guard(path, lambda: NewServiceType(t, tuple(services), deadline))
    if kind == "RequirementChange":
        req = _requirements(r, d.get("requirements"), f"{path}.requirements")
        return req and RequirementChange(t, req)
    sd = r.obj(d.get("service"), f"{path}.service", {"type", "id"}, {"type", "id"})
    typ = r.string(sd, "type", f"{path}.service", choices={x.value for x in ServiceType})
    sid = r.number(sd, "id", f"{path}.service", integer=True, lo=1)
    fr = r.number(d, "failure_rate", path, lo=0.0, hi=1.0)
    if typ is None or sid is None or fr is None:
        return None
    return RateShift(t, ServiceKey(ServiceType(typ), sid), fr)


_TOP = {"name", "seed", "horizon_hours", "mean_invocations_per_hour", "arrivals", "drift_sigma",
        "request_drift_sigma", "refresh_period", "workflow", "requirements", "registry",
        "initial_configuration", "adaptation", "events"}


def scenario_from_dict(raw: Any) -> ScenarioSpec:
    r = _Reader()
    d = r.obj(raw, "$", _TOP, {"name", "registry"})
    name = r.string(d, "name", "$", "scenario")
    seed = r.number(d, "seed", "$", 0, integer=True, lo=0, hi=2**64 - 1)
    horizon = r.number(d, "horizon_hours", "$", 5.0)
    rate = r.number(d, "mean_invocations_per_hour", "$", 1000.0)
    arrivals = r.string(d, "arrivals", "$", "poisson", choices={"poisson", "fixed"})
    sigma = r.number(d, "drift_sigma", "$", 0.0, lo=0.0)
    rsigma = r.number(d, "request_drift_sigma", "$", 0.0, lo=0.0)
    period = r.number(d, "refresh_period", "$", 1.0)

    wd = r.obj(d.get("workflow", {}), "$.workflow", {"request_split", "analysis_split", "inform_relatives"})
    rs = _split(r, wd, "request_split", ("vital", "emergency"), "$.workflow", (0.75, 0.25))
    an = _split(r, wd, "analysis_split", ("drug", "alarm"), "$.workflow", (0.66, 0.34))
    ir = r.boolean(wd, "inform_relatives", "$.workflow")
    workflow = r.guard("$.workflow", lambda: WorkflowSpec(rs, an, ir))

    req = _requirements(r, d.get("requirements", {}), "$.requirements")

    services = []
    raw_reg = d.get("registry", [])
    if not isinstance(raw_reg, list):
        r.fail("$.registry", "expected a list of services")
        raw_reg = []
    for i, s in enumerate(raw_reg):
        svc = _service(r, s, f"$.registry[{i}]")
        if svc is not None:
            services.append(svc)
    registry = ServiceRegistry(tuple(services))

    config = None
    if "initial_configuration" in d:
        config = parse_configuration(d["initial_configuration"], "$.initial_configuration", r)

    ad = r.obj(d.get("adaptation", {}), "$.adaptation", {"retry_depth", "window", "tau", "max_candidates",
                                                        "prune_keep"})
    settings = r.guard("$.adaptation", lambda: AdaptationSettings(
        r.number(ad, "retry_depth", "$.adaptation", 2, integer=True, lo=1),
        r.number(ad, "window", "$.adaptation", 200, integer=True, lo=1),
        r.number(ad, "tau", "$.adaptation", 0.02, lo=0.0),
        r.number(ad, "max_candidates", "$.adaptation", 20000, integer=True, lo=1),
        r.number(ad, "prune_keep", "$.adaptation", 6, integer=True, lo=1),
    ))

    events = []
    raw_events = d.get("events", [])
    if not isinstance(raw_events, list):
        r.fail("$.events", "expected a list")
        raw_events = []
    for i, e in enumerate(raw_events):
        ev = _event(r, e, f"$.events[{i}]")
        if ev is not None:
            events.append(ev)

    if r.errors:
        raise ScenarioError(r.errors)
    spec = ScenarioSpec(name, registry, workflow, req, config, horizon, rate, arrivals, sigma, rsigma, period,
                        tuple(events), seed, settings)
    problems = spec.validate()
    if problems:
        raise ScenarioError(problems)
    return spec


def parse_scenario(path) -> ScenarioSpec:
    text = Path(path).read_text()
    return loads_scenario(text, str(path))


def loads_scenario(text: str, source: str = "<string>") -> ScenarioSpec:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}"]) from None
    return scenario_from_dict(raw)


def _service_dict(s: ConcreteService) -> dict:
    return {"type": s.type.value, "id": s.id, "failure_rate": s.failure_rate, "cost": s.cost}


def _req_dict(r: RequirementSpec) -> dict:
    out = {"max_failure_prob": r.max_failure_prob, "max_avg_cost": r.max_avg_cost}
    if r.pair_budget_X is not None:
        out["pair_budget"] = r.pair_budget_X
    return out


def _event_dict(e) -> dict:
    if isinstance(e, NewService):
        return {"time": e.time, "kind": "NewService", "service": _service_dict(e.service)}
    if isinstance(e, NewServiceType):
        return {"time": e.time, "kind": "NewServiceType", "services": [_service_dict(s) for s in e.services],
                "deadline": e.deadline}
    if isinstance(e, RequirementChange):
        return {"time": e.time, "kind": "RequirementChange", "requirements": _req_dict(e.requirements)}
    return {"time": e.time, "kind": "RateShift", "service": {"type": e.service.type.value, "id": e.service.id},
            "failure_rate": e.failure_rate}


def scenario_to_dict(spec: ScenarioSpec) -> dict:
    wf = spec.workflow
    out = {
        "name": spec.name,
        "seed": spec.seed,
        "horizon_hours": spec.horizon_hours,
        "mean_invocations_per_hour": spec.mean_invocations_per_hour,
        "arrivals": spec.arrivals,
        "drift_sigma": spec.drift_sigma,
        "request_drift_sigma": spec.request_drift_sigma,
        "refresh_period": spec.refresh_period_T,
        "workflow": {
            "request_split": {"vital": wf.request_split[0], "emergency": wf.request_split[1]},
            "analysis_split": {"drug": wf.analysis_split[0], "alarm": wf.analysis_split[1]},
            "inform_relatives": wf.inform_relatives_enabled,
        },
        "requirements": _req_dict(spec.requirements),
        "registry": [_service_dict(s) for s in spec.initial_registry.services],
    }
    if spec.initial_configuration is not None:
        out["initial_configuration"] = spec.initial_configuration.to_dict()
    a = spec.adaptation
    out["adaptation"] = {"retry_depth": a.retry_depth, "window": a.window, "tau": a.tau,
                         "max_candidates": a.max_candidates, "prune_keep": a.prune_keep}
    out["events"] = [_event_dict(e) for e in spec.events]
    return out


def dumps_scenario(spec: ScenarioSpec) -> str:
    return json.dumps(scenario_to_dict(spec), indent=2) + "\n"


def bundled_path(name: str) -> Path:
    """Path of a scenario or suite shipped with the package."""
    return Path(str(resources.files("pas") / "scenarios" / name))


def default_scenario() -> ScenarioSpec:
    return parse_scenario(bundled_path("tas-default.json"))


@dataclass
class SuiteSpec:
    name: str
    scenarios: list[ScenarioSpec]
    engines: list[EngineConfig]
    repetitions: int = 20
    sweep_sizes: list[int] = field(default_factory=lambda: [5, 10, 15, 20])


_ENGINES = {"rqv", "rqv-parametric", "rsmc"}


def engine_from_dict(r: _Reader, raw, path: str) -> EngineConfig | None:
    d = r.obj(raw, path, {"engine", "E", "A"}, {"engine"})
    name = r.string(d, "engine", path, choices=_ENGINES)
    if name is None:
        return None
    if name != "rsmc":
        for key in ("E", "A"):
            if key in d:
                r.fail(f"{path}.{key}", f"only valid for engine rsmc, not {name}")
        return EngineConfig(name)
    E = r.number(d, "E", path, 0.05, lo=0.0, hi=1.0)
    A = r.number(d, "A", path, 0.05, lo=0.0, hi=1.0)
    return EngineConfig("rsmc", E, A)


def parse_suite(path) -> SuiteSpec:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}"]) from None
    r = _Reader()
    d = r.obj(raw, "$", {"name", "scenarios", "engines", "repetitions", "sweep_sizes"}, {"scenarios"})
    name = r.string(d, "name", "$", path.stem)
    reps = r.number(d, "repetitions", "$", 20, integer=True, lo=1)
    sizes = d.get("sweep_sizes", [5, 10, 15, 20])
    if not isinstance(sizes, list) or not all(isinstance(s, int) and s >= 1 for s in sizes) or sizes != sorted(sizes):
        r.fail("$.sweep_sizes", "expected an ascending list of positive integers")
        sizes = [5, 10, 15, 20]
    engines = [engine_from_dict(r, e, f"$.engines[{i}]") for i, e in enumerate(d.get("engines", []))]
    scenarios = []
    for i, ref in enumerate(d.get("scenarios", [])):
        if not isinstance(ref, str):
            r.fail(f"$.scenarios[{i}]", "expected a file path")
            continue
        target = (path.parent / ref) if not Path(ref).is_absolute() else Path(ref)
        if not target.exists():
            target = bundled_path(ref)
        try:
            scenarios.append(parse_scenario(target))
        except (ScenarioError, OSError) as exc:
            r.fail(f"$.scenarios[{i}]", str(exc))
    if r.errors:
        raise ScenarioError(r.errors)
    return SuiteSpec(name, scenarios, [e for e in engines if e is not None], reps, sizes)
