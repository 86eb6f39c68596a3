"""Statistical model checking of the workflow model.

The sample size comes from the Hoeffding (Okamoto) bound
``N = ceil(ln(2/A) / (2 E^2))``, which guarantees
``Pr(|p_hat - p| > E) <= A`` for the failure probability estimate.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .engine import AssuranceEngine, Compliance, Evidence, ModelParams, Verdict
from .model import Configuration, ModelError, RequirementSpec, ServiceKey, ServiceType, WorkflowSpec
from .semantics import SlotLayout, bound_services, check_bindings, walk, workflow_graph


@dataclass(frozen=True)
class SmcStrategy:
    E: float
    A: float
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.E < 1:
            raise ModelError(f"E must lie in (0, 1), got {self.E!r}")
        if not 0 < self.A < 1:
            raise ModelError(f"A must lie in (0, 1), got {self.A!r}")

    @property
    def samples(self) -> int:
        return required_samples(self.E, self.A)


DEFAULT_STRATEGIES = ((0.05, 0.05), (0.05, 0.10), (0.10, 0.05), (0.10, 0.10))


@dataclass(frozen=True)
class SmcEstimate:
    p_hat: float
    cost_hat: float
    N: int
    wall_micros: float
    strategy: SmcStrategy
    failures: int = 0


def required_samples(E: float, A: float) -> int:
    if not (0 < E < 1 and 0 < A < 1):
        raise ModelError(f"E and A must lie in (0, 1), got E={E!r}, A={A!r}")
    return math.ceil(math.log(2.0 / A) / (2.0 * E * E))


def _row_draw(rng, width: int):
    if isinstance(rng, np.random.Generator):
        return rng.random(width).tolist()
    return [rng.random() for _ in range(width)]


def simulate_once(workflow: WorkflowSpec, config: Configuration, params: ModelParams, rng,
                  layout: SlotLayout | None = None) -> tuple[bool, float]:
    """One random walk of the model under ``params``; returns (failed, cost)."""
    root = workflow_graph(workflow)
    layout = layout or SlotLayout.for_config(root, config)
    row = _row_draw(rng, layout.width)
    return walk(root, config, params.rate, params.cost_of, params.split, row.__getitem__, layout)


def _walk_rows(root, config, params, layout, rows) -> tuple[int, list[float]]:
    failures = 0
    costs = []
    rate, cost_of, split = params.rate, params.cost_of, params.split
    for row in rows:
        failed, c = walk(root, config, rate, cost_of, split, row.__getitem__, layout)
        failures += failed
        costs.append(c)
    return failures, costs


def estimate(workflow: WorkflowSpec, config: Configuration, params: ModelParams, strategy: SmcStrategy,
             layout: SlotLayout | None = None, workers: int = 1, rng=None) -> SmcEstimate:
    """Failure probability and mean cost from exactly ``required_samples`` walks.

    Sample rows are drawn up front, so splitting the walks across workers
    cannot change the result.
    """
    start = time.perf_counter()
    root = workflow_graph(workflow)
    check_bindings(root, config)
    layout = layout or SlotLayout.for_config(root, config)
    n = strategy.samples
    rng = np.random.default_rng(strategy.seed) if rng is None else rng
    rows = rng.random((n, layout.width)).tolist()
    if workers <= 1:
        failures, costs = _walk_rows(root, config, params, layout, rows)
    else:
        size = math.ceil(n / workers)
        chunks = [rows[i:i + size] for i in range(0, n, size)]
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda ch: _walk_rows(root, config, params, layout, ch), chunks))
        failures = sum(p[0] for p in parts)
        costs = [c for p in parts for c in p[1]]
    wall = (time.perf_counter() - start) * 1e6
    return SmcEstimate(failures / n, math.fsum(costs) / n, n, wall, strategy, failures)


def verdict_smc(est: SmcEstimate, requirements: RequirementSpec) -> Verdict:
    E = est.strategy.E
    if est.p_hat - E > requirements.max_failure_prob or est.cost_hat > requirements.max_avg_cost:
        status = Compliance.VIOLATING
    elif est.p_hat + E <= requirements.max_failure_prob:
        status = Compliance.COMPLIANT
    else:
        status = Compliance.UNDECIDED
    return Verdict(est.p_hat, est.cost_hat, status, Evidence("rsmc", est.N, est.wall_micros),
                   max(0.0, est.p_hat - E), min(1.0, est.p_hat + E))


def _step_outcomes(U, base, lists, params, parallel, extra_cost=None):
    """Per option list: failure indicator and charged cost over all samples."""
    n = U.shape[0]
    fails = np.empty((len(lists), n), dtype=bool)
    costs = np.empty((len(lists), n))
    for j, keys in enumerate(lists):
        ok = np.zeros(n, dtype=bool)
        cost = np.zeros(n)
        reached = np.ones(n, dtype=bool)
        for i, key in enumerate(keys):
            failed = U[:, base + i] < params.rate(key)
            c = params.cost_of(key)
            if parallel:
                cost += c
                ok |= ~failed
            else:
                cost += reached * c
                ok |= reached & ~failed
                reached &= failed
        if extra_cost is not None:
            cost += ok * extra_cost
        fails[j] = ~ok
        costs[j] = cost
    return fails, costs


_INDEX_CACHE: list = [None, None]


def _option_index(configs):
    """Distinct option lists per core operation and each candidate's picks."""
    if _INDEX_CACHE[0] is configs:
        return _INDEX_CACHE[1]
    out = []
    for op in (ServiceType.MEDICAL_ANALYSIS, ServiceType.DRUG, ServiceType.ALARM):
        index: dict = {}
        picks = np.fromiter((index.setdefault(c[op], len(index)) for c in configs), dtype=np.intp,
                            count=len(configs))
        out.append(([tuple(ServiceKey(op, j) for j in ids) for ids in index], picks))
    _INDEX_CACHE[:] = [configs, out]
    return out


def batch_estimates(workflow: WorkflowSpec, configs: Sequence[Configuration], params: ModelParams,
                    n: int, rng: np.random.Generator, layout: SlotLayout | None = None):
    """Failure counts and mean costs for many configurations from one sample matrix.

    Every configuration is evaluated on the same ``n`` rows (common random
    numbers), so each estimate individually keeps the Hoeffding guarantee.
    Returns ``(failures, mean_costs)`` arrays in candidate order; the per-row
    semantics are those of ``walk``.
    """
    root = workflow_graph(workflow)
    depth = max(c.depth() for c in configs)
    ir_lists = {c.get(ServiceType.INFORM_RELATIVES) for c in configs}
    if workflow.inform_relatives_enabled and (len(ir_lists) != 1 or None in ir_lists):
        raise ModelError("batched estimation needs one shared InformRelatives binding")
    ir = next(iter(ir_lists)) if workflow.inform_relatives_enabled else None
    layout = layout or SlotLayout.for_graph(root, depth, len(ir) if ir else 1)
    off = layout.offsets
    U = rng.random((n, layout.width))

    vital = U[:, off["request"]] < params.p_vital
    drug = U[:, off["analysis"]] < params.p_drug

    (m_lists, im), (d_lists, id_), (a_lists, ia) = _option_index(configs)
    modes = {c.parallel for c in configs}
    if len(modes) != 1:
        raise ModelError("batched estimation needs one shared parallel-mode set")
    par = next(iter(modes))

    def is_par(op):
        return op in par

    ir_cost = None
    if ir is not None:
        ir_keys = bound_services(next(iter(configs)), ServiceType.INFORM_RELATIVES)
        _, ir_c = _step_outcomes(U, off["IR"], [ir_keys], params, is_par(ServiceType.INFORM_RELATIVES))
        ir_cost = ir_c[0]

    Mf, Mc = _step_outcomes(U, off["M"], m_lists, params, is_par(ServiceType.MEDICAL_ANALYSIS))
    Df, Dc = _step_outcomes(U, off["D"], d_lists, params, is_par(ServiceType.DRUG))
    Avf, Avc = _step_outcomes(U, off["A_v"], a_lists, params, is_par(ServiceType.ALARM), ir_cost)
    Aef, Aec = _step_outcomes(U, off["A_e"], a_lists, params, is_par(ServiceType.ALARM), ir_cost)

    emergency = ~vital
    to_drug = (vital & drug) & ~Mf
    to_alarm = (vital & ~drug) & ~Mf
    Xd = to_drug.astype(float)
    Xa = to_alarm.astype(float)

    f_m = (Mf & vital).sum(axis=1)
    f_md = Xd @ Df.T.astype(float)
    f_ma = Xa @ Avf.T.astype(float)
    f_a = (Aef & emergency).sum(axis=1)
    failures = f_m[im] + f_md[im, id_] + f_ma[im, ia] + f_a[ia]

    c_m = (Mc * vital).sum(axis=1)
    c_md = Xd @ Dc.T
    c_ma = Xa @ Avc.T
    c_a = (Aec * emergency).sum(axis=1)
    costs = (c_m[im] + c_md[im, id_] + c_ma[im, ia] + c_a[ia]) / n
    return np.rint(failures).astype(np.int64), costs


class SmcEngine(AssuranceEngine):
    """Runtime statistical model checking with a fixed (E, A) strategy.

    Each verification call draws from its own substream, derived from the
    strategy seed and the call index.
    """

    name = "rsmc"

    def __init__(self, strategy: SmcStrategy):
        self.strategy = strategy
        self.calls = 0

    def _next_rng(self) -> np.random.Generator:
        rng = np.random.default_rng(np.random.SeedSequence([self.strategy.seed & (2**63 - 1), self.calls]))
        self.calls += 1
        return rng

    def verify(self, workflow, config, params, requirements):
        est = estimate(workflow, config, params, self.strategy, rng=self._next_rng())
        return verdict_smc(est, requirements)

    def verify_many(self, workflow, configs, params, requirements):
        if len(configs) == 1:
            return [self.verify(workflow, configs[0], params, requirements)]
        start = time.perf_counter()
        n = self.strategy.samples
        failures, costs = batch_estimates(workflow, configs, params, n, self._next_rng())
        E = self.strategy.E
        p = failures / n
        violating = (p - E > requirements.max_failure_prob) | (costs > requirements.max_avg_cost)
        compliant = ~violating & (p + E <= requirements.max_failure_prob)
        status = np.where(violating, 1, np.where(compliant, 0, 2)).tolist()
        labels = (Compliance.COMPLIANT, Compliance.VIOLATING, Compliance.UNDECIDED)
        lo = np.maximum(0.0, p - E).tolist()
        hi = np.minimum(1.0, p + E).tolist()
        share = (time.perf_counter() - start) * 1e6 / len(configs)
        evidence = Evidence(self.name, n, share)
        return [Verdict(pi, ci, labels[s], evidence, a, b)
                for pi, ci, s, a, b in zip(p.tolist(), costs.tolist(), status, lo, hi)]

    def describe(self):
        return {"engine": self.name, "E": self.strategy.E, "A": self.strategy.A, "N": self.strategy.samples}
