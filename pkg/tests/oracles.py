"""Brute-force reference computations, written without the package's engines.

Each workflow path is listed explicitly with its probability and cost, so the
totals do not depend on the Markov chain, the shared walker or the samplers.
"""

from __future__ import annotations

import itertools
import math

OPS = ("Alarm", "MedicalAnalysis", "Drug")


def operation_paths(ids, rates, costs, parallel=False):
    """Outcomes of one operation as (succeeded, probability, cost) triples."""
    fr = [rates[i] for i in ids]
    cs = [costs[i] for i in ids]
    if parallel:
        p_all_fail = math.prod(fr)
        return [(True, 1.0 - p_all_fail, sum(cs)), (False, p_all_fail, sum(cs))]
    paths = []
    reach = 1.0
    spent = 0.0
    for f, c in zip(fr, cs):
        spent += c
        paths.append((True, reach * (1.0 - f), spent))
        reach *= f
    paths.append((False, reach, spent))
    return paths


def workflow_paths(binding, rates, costs, p_vital, p_drug, parallel=(), inform_relatives=None):
    """Every complete path as (failed, probability, cost).

    ``binding`` maps operation name to a list of ids; ``rates``/``costs`` map
    operation name to {id: value}. ``inform_relatives`` is an optional id list
    for the non-fatal notification step after each successful Alarm.
    """
    def op(name):
        return operation_paths(binding[name], rates[name], costs[name], name in parallel)

    def alarm_then_inform():
        out = []
        for ok, p, c in op("Alarm"):
            if not ok:
                out.append((True, p, c))
            elif inform_relatives:
                for _ok_ir, p_ir, c_ir in operation_paths(inform_relatives, rates["InformRelatives"],
                                                          costs["InformRelatives"]):
                    out.append((False, p * p_ir, c + c_ir))
            else:
                out.append((False, p, c))
        return out

    paths = []
    for failed, p, c in alarm_then_inform():
        paths.append((failed, (1 - p_vital) * p, c))
    for ok_m, p_m, c_m in op("MedicalAnalysis"):
        if not ok_m:
            paths.append((True, p_vital * p_m, c_m))
            continue
        for ok_d, p_d, c_d in op("Drug"):
            paths.append((not ok_d, p_vital * p_m * p_drug * p_d, c_m + c_d))
        for failed, p_a, c_a in alarm_then_inform():
            paths.append((failed, p_vital * p_m * (1 - p_drug) * p_a, c_m + c_a))
    return paths


def failure_and_cost(binding, rates, costs, p_vital=0.75, p_drug=0.66, parallel=(), inform_relatives=None):
    paths = workflow_paths(binding, rates, costs, p_vital, p_drug, parallel, inform_relatives)
    p_fail = math.fsum(p for failed, p, _ in paths if failed)
    cost = math.fsum(p * c for _, p, c in paths)
    return p_fail, cost


TAS_SERVICES = {
    "Alarm": {1: (0.11, 4.0), 2: (0.04, 12.0), 3: (0.18, 2.0), 4: (0.08, 3.0), 5: (0.14, 5.0)},
    "MedicalAnalysis": {1: (0.12, 4.0), 2: (0.07, 14.0), 3: (0.18, 2.0), 4: (0.10, 6.0), 5: (0.15, 3.0)},
    "Drug": {1: (0.01, 5.0), 2: (0.03, 3.0), 3: (0.05, 2.0), 4: (0.07, 1.0), 5: (0.02, 4.0)},
}
TAS_RATES = {op: {i: v[0] for i, v in rows.items()} for op, rows in TAS_SERVICES.items()}
TAS_COSTS = {op: {i: v[1] for i, v in rows.items()} for op, rows in TAS_SERVICES.items()}


def all_bindings(ids=(1, 2, 3, 4, 5), depth=2):
    """Every binding with ordered, distinct alternatives of length 1..depth."""
    options = [p for k in range(1, depth + 1) for p in itertools.permutations(ids, k)]
    for a, m, d in itertools.product(options, repeat=3):
        yield {"Alarm": list(a), "MedicalAnalysis": list(m), "Drug": list(d)}


def brute_force_optimum(max_fail=0.02, max_cost=8.0, depth=2):
    """Cheapest binding meeting both thresholds (ties: lower failure)."""
    best = None
    for b in all_bindings(depth=depth):
        p, c = failure_and_cost(b, TAS_RATES, TAS_COSTS)
        if p <= max_fail and c <= max_cost and (best is None or (c, p) < best[:2]):
            best = (c, p, b)
    return best


def best_pair(max_fail, medical=TAS_SERVICES["MedicalAnalysis"], alarm=TAS_SERVICES["Alarm"]):
    """Cheapest (medical, alarm) pair with summed failure rates at most ``max_fail``; ties by ids."""
    feasible = []
    for m, (fm, cm) in medical.items():
        for a, (fa, ca) in alarm.items():
            fail = fm + fa
            if fail <= max_fail + 1e-12:
                feasible.append((cm + ca, m, a, fail))
    return min(feasible) if feasible else None


def oracle_for(config, rates=TAS_RATES, costs=TAS_COSTS, p_vital=0.75, p_drug=0.66):
    """Adapter from a package Configuration to :func:`failure_and_cost`."""
    binding = {op.value: list(ids) for op, ids in config.binding}
    ir = binding.pop("InformRelatives", None)
    parallel = {op.value for op in config.parallel}
    return failure_and_cost(binding, rates, costs, p_vital, p_drug, parallel, ir)
