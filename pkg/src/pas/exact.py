"""Exact runtime verification on an acyclic discrete-time Markov chain.

State layout: one ``entry`` state, then one transient state per
(step, attempt) pair, named ``<step>#<attempt>[<service>]``, plus the absorbing
``Success`` and ``Failure`` states. Choices are folded into the transition
probabilities of the state that precedes them, so a depth-1 binding of the
three core operations yields five transient states (entry, M, D, A_v, A_e).
Every transition leaving an attempt state is rewarded with the cost of that
attempt's service.

Because the chain is a DAG, absorption probabilities and expected rewards are
computed by a single backward pass. Running the same pass over polynomial
values instead of floats gives the parametric form.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, NamedTuple, Sequence

from .engine import AssuranceEngine, Compliance, Evidence, ModelParams, Verdict, rate_variable
from .model import Configuration, ModelError, RequirementSpec, ServiceKey, WorkflowSpec
from .polynomial import Polynomial, _coerce
from .semantics import Choice, Node, Step, bound_services, workflow_graph

SUCCESS = "Success"
FAILURE = "Failure"
ENTRY = "entry"


class Transition(NamedTuple):
    target: str
    prob: object
    reward: object


@dataclass(frozen=True)
class MarkovModel:
    """``order`` lists transient states so that successors precede predecessors."""

    order: tuple[str, ...]
    transitions: dict
    initial: str = ENTRY

    @property
    def states(self) -> tuple[str, ...]:
        return (self.initial,) + tuple(s for s in reversed(self.order) if s != self.initial) + (SUCCESS, FAILURE)

    @property
    def transient_count(self) -> int:
        return len(self.order)

    def check(self, tol: float = 1e-12) -> None:
        """Validate normalization and acyclicity; raises ModelError."""
        position = {s: i for i, s in enumerate(self.order)}
        for state in self.order:
            outgoing = self.transitions[state]
            total = sum(float(t.prob) for t in outgoing)
            if abs(total - 1.0) > tol:
                raise ModelError(f"outgoing probabilities of {state} sum to {total}")
            for t in outgoing:
                if t.target in (SUCCESS, FAILURE):
                    continue
                if t.target not in position:
                    raise ModelError(f"{state} leads to unknown state {t.target}")
                if position[t.target] >= position[state]:
                    raise ModelError(f"transition {state} -> {t.target} breaks acyclicity")


def _build(workflow: WorkflowSpec, config: Configuration,
           rate: Callable[[ServiceKey], object], cost: Callable[[ServiceKey], object],
           split: Callable[[str], object]) -> MarkovModel:
    root = workflow_graph(workflow)
    transitions: dict = {}
    order: list[str] = []
    entries: dict = {}

    def expand(node: Node | None, prob) -> list[Transition]:
        # successor distribution reached with weight ``prob``; rewards filled by caller
        if node is None:
            return [(SUCCESS, prob)]
        if isinstance(node, Choice):
            p = split(node.param)
            return expand(node.yes, prob * p) + expand(node.no, prob * (1 - p))
        return [(emit(node), prob)]

    def emit(step: Step) -> str:
        if step.name in entries:
            return entries[step.name]
        services = bound_services(config, step.op)
        parallel = step.op in config.parallel
        on_success = expand(step.next, 1)
        exhausted = FAILURE if step.fatal else None
        follow = None
        if exhausted is None:
            # a non-fatal step that runs out of alternatives just continues
            follow = on_success
        next_state = None
        for i in range(len(services) - 1, -1, -1):
            key = services[i]
            name = f"{step.name}#{i + 1}[{key}]"
            f = rate(key)
            if parallel:
                reward = sum((cost(k) for k in services), 0) if i == 0 else 0
            else:
                reward = cost(key)
            out = [Transition(t, (1 - f) * w, reward) for t, w in on_success]
            if next_state is not None:
                out.append(Transition(next_state, f, reward))
            elif exhausted is not None:
                out.append(Transition(exhausted, f, reward))
            else:
                out.extend(Transition(t, f * w, reward) for t, w in follow)
            transitions[name] = out
            order.append(name)
            next_state = name
        entries[step.name] = next_state
        return next_state

    head = [Transition(t, w, 0) for t, w in expand(root, 1)]
    transitions[ENTRY] = head
    order.append(ENTRY)
    return MarkovModel(tuple(order), transitions)


def build_chain(workflow: WorkflowSpec, config: Configuration, params: ModelParams) -> MarkovModel:
    return _build(workflow, config, params.rate, params.cost_of, params.split)


def _backward(model: MarkovModel, zero, one):
    fail = {SUCCESS: zero, FAILURE: one}
    cost = {SUCCESS: zero, FAILURE: zero}
    for state in model.order:
        pf = zero
        pc = zero
        for t in model.transitions[state]:
            pf = pf + t.prob * fail[t.target]
            pc = pc + t.prob * (t.reward + cost[t.target])
        fail[state] = pf
        cost[state] = pc
    return fail[model.initial], cost[model.initial]


def eval_failure_probability(model: MarkovModel) -> float:
    """Probability of absorption in Failure from the entry state."""
    return _backward(model, 0.0, 1.0)[0]


def eval_expected_cost(model: MarkovModel) -> float:
    """Expected accumulated reward until absorption."""
    return _backward(model, 0.0, 1.0)[1]


def evaluate(model: MarkovModel) -> tuple[float, float]:
    return _backward(model, 0.0, 1.0)


def precompute_parametric(workflow: WorkflowSpec, config: Configuration,
                          costs) -> tuple[Polynomial, Polynomial]:
    """Failure probability and expected cost as polynomials.

    Variables are the bound services' failure rates (``f[<type>:<id>]``) and
    the two split parameters; costs enter as exact rational constants taken
    from ``costs`` (a mapping or a ModelParams).
    """
    cost_of = costs.cost_of if isinstance(costs, ModelParams) else costs.__getitem__
    model = _build(
        workflow, config,
        lambda key: Polynomial.variable(rate_variable(key)),
        lambda key: _coerce(cost_of(key)),
        Polynomial.variable,
    )
    return _backward(model, Polynomial(), Polynomial.constant(1))


def eval_parametric(poly: Polynomial, params: ModelParams) -> float:
    return poly.evaluate(params.variables())


def verdict_exact(failure_prob: float, expected_cost: float, requirements: RequirementSpec,
                  evidence: Evidence | None = None) -> Verdict:
    ok = failure_prob <= requirements.max_failure_prob and expected_cost <= requirements.max_avg_cost
    return Verdict(
        failure_prob,
        expected_cost,
        Compliance.COMPLIANT if ok else Compliance.VIOLATING,
        evidence or Evidence("rqv", 0, 0.0),
    )


def export_transitions(workflow: WorkflowSpec, config: Configuration, costs) -> str:
    """Textual transition list: ``state, successor, probability-expression, reward``."""
    cost_of = costs.cost_of if isinstance(costs, ModelParams) else costs.__getitem__
    model = _build(
        workflow, config,
        lambda key: Polynomial.variable(rate_variable(key)),
        lambda key: _coerce(cost_of(key)),
        Polynomial.variable,
    )
    lines = ["# state, successor, probability-expression, reward"]
    for state in reversed(model.order):
        for t in model.transitions[state]:
            reward = t.reward if isinstance(t.reward, Fraction) else _coerce(t.reward)
            lines.append(f"{state}, {t.target}, {t.prob}, {float(reward):g}")
    return "\n".join(lines) + "\n"


class ExactEngine(AssuranceEngine):
    """Builds and solves the chain for every candidate."""

    name = "rqv"

    def verify(self, workflow, config, params, requirements):
        start = time.perf_counter()
        model = build_chain(workflow, config, params)
        p, c = evaluate(model)
        wall = (time.perf_counter() - start) * 1e6
        return verdict_exact(p, c, requirements, Evidence(self.name, model.transient_count + 2, wall))


_POLY_CACHE: dict = {}


class ParametricEngine(AssuranceEngine):
    """Precomputes polynomials once per configuration, then only evaluates them.

    Precomputation time is tracked separately from the per-verification time,
    mirroring the offline/online split of parametric model checking.
    """

    name = "rqv-parametric"

    def __init__(self, cache: dict | None = None):
        self.cache = _POLY_CACHE if cache is None else cache
        self.precompute_micros = 0.0

    def polynomials(self, workflow, config, params) -> tuple[Polynomial, Polynomial]:
        key = (workflow, config, tuple(params.cost_of(k) for k in config.keys()))
        polys = self.cache.get(key)
        if polys is None:
            start = time.perf_counter()
            polys = precompute_parametric(workflow, config, params)
            self.precompute_micros += (time.perf_counter() - start) * 1e6
            self.cache[key] = polys
        return polys

    def verify(self, workflow, config, params, requirements):
        fpoly, cpoly = self.polynomials(workflow, config, params)
        start = time.perf_counter()
        values = params.variables()
        p = fpoly.evaluate(values)
        c = cpoly.evaluate(values)
        wall = (time.perf_counter() - start) * 1e6
        return verdict_exact(p, c, requirements, Evidence(self.name, len(fpoly.terms) + len(cpoly.terms), wall))

    def verify_many(self, workflow, configs: Sequence[Configuration], params, requirements):
        values = params.variables()
        out = []
        for config in configs:
            fpoly, cpoly = self.polynomials(workflow, config, params)
            start = time.perf_counter()
            p = fpoly.evaluate(values)
            c = cpoly.evaluate(values)
            wall = (time.perf_counter() - start) * 1e6
            out.append(verdict_exact(p, c, requirements,
                                     Evidence(self.name, len(fpoly.terms) + len(cpoly.terms), wall)))
        return out
