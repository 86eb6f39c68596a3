import json
import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from pas.engine import Compliance, Evidence, Verdict
from pas.exact import ExactEngine
from pas.mape import (AdaptationPlan, Knowledge, MapeController, adaptation_trigger, analyze, estimate_failure_rate,
                      execute, generate_candidates, integrate_service_type, monitor_update, plan, prune_options)
from pas.model import (ConcreteService, Configuration, ModelError, RequirementSpec, ServiceKey, ServiceRegistry,
                       ServiceType, WorkflowSpec, enumerate_configurations, tas_registry)
from pas.smc import SmcEngine, SmcStrategy
from pas.trace import InvocationOutcome

A, M, D, IR = ServiceType.ALARM, ServiceType.MEDICAL_ANALYSIS, ServiceType.DRUG, ServiceType.INFORM_RELATIVES
A2 = ServiceKey(A, 2)


@pytest.fixture
def knowledge(registry, workflow, requirements, depth1_config):
    return Knowledge(registry, workflow, requirements, depth1_config, window=100)


def outcome(steps, kind="emergency", clock=0.0):
    return InvocationOutcome(clock, kind, tuple(steps), False, 0.0)


def verdict(p, c, status):
    return Verdict(p, c, status, Evidence("test", 1, 0.0))


class TestMonitor:
    def test_first_observation(self, knowledge):
        monitor_update(knowledge, outcome([(A, A2, True, 12.0)]))
        assert len(knowledge.windows[A2]) == 1

    def test_eviction(self, knowledge):
        for i in range(150):
            monitor_update(knowledge, outcome([(A, A2, i < 75, 12.0)]))
        window = knowledge.windows[A2]
        assert len(window) == 100
        assert sum(window) == 75  # latest 100: 25 successes then 75 failures

    def test_per_step_accounting(self, knowledge):
        monitor_update(knowledge, outcome([(M, ServiceKey(M, 2), True, 14.0), (D, ServiceKey(D, 1), True, 5.0)],
                                          "vital"))
        assert set(knowledge.windows) == {ServiceKey(M, 2), ServiceKey(D, 1)}
        assert list(knowledge.analysis) == [1]

    def test_unknown_service_skipped(self, knowledge, caplog):
        monitor_update(knowledge, outcome([(A, ServiceKey(A, 99), False, 1.0)]))
        assert ServiceKey(A, 99) not in knowledge.windows
        assert "unknown service" in caplog.text


class TestEstimate:
    def test_fallback(self, knowledge):
        est = estimate_failure_rate(knowledge, A2)
        assert (est.point, est.ci_low, est.ci_high, est.sample_count) == (0.04, 0.0, 1.0, 0)

    def test_laplace(self, registry, workflow, requirements, depth1_config):
        k = Knowledge(registry, workflow, requirements, depth1_config, window=200)
        for i in range(98):
            monitor_update(k, outcome([(A, A2, i >= 4, 12.0)]))
        assert estimate_failure_rate(k, A2).point == pytest.approx(0.05)

    def test_half_width(self, registry, workflow, requirements, depth1_config):
        k = Knowledge(registry, workflow, requirements, depth1_config, window=1000)
        for _ in range(1000):
            monitor_update(k, outcome([(A, A2, True, 12.0)]))
        est = estimate_failure_rate(k, A2)
        half = math.sqrt(math.log(40) / 2000)
        assert half == pytest.approx(0.04295, abs=1e-5)
        assert est.ci_high - est.point == pytest.approx(half)

    @given(st.lists(st.booleans(), min_size=1, max_size=300))
    def test_interval_contains_point(self, flags):
        k = Knowledge(tas_registry(), WorkflowSpec(), RequirementSpec(), Configuration.of(A=[2], M=[2], D=[1]))
        for f in flags:
            monitor_update(k, outcome([(A, A2, f, 12.0)]))
        est = estimate_failure_rate(k, A2)
        assert 0.0 <= est.ci_low <= est.point <= est.ci_high <= 1.0
        assert est.sample_count == min(len(flags), k.window)

    def test_consistency(self):
        p, n, hits = 0.1, 400, 0
        for trial in range(200):
            rng = random.Random(trial)
            k = Knowledge(tas_registry(), WorkflowSpec(), RequirementSpec(),
                          Configuration.of(A=[2], M=[2], D=[1]), window=n)
            for _ in range(n):
                monitor_update(k, outcome([(A, A2, rng.random() >= p, 12.0)]))
            est = estimate_failure_rate(k, A2)
            hits += abs(est.point - p) <= est.ci_high - est.point
        assert hits >= 190


class TestAnalyze:
    def test_one_candidate_one_entry(self, knowledge, compliant_config):
        result = analyze(knowledge, ExactEngine(), [compliant_config])
        assert len(knowledge.evidence) == 1
        assert result[0][1].compliant is Compliance.COMPLIANT
        entry = knowledge.evidence.entries()[0]
        assert set(entry) == {"clock", "kind", "configuration", "parameters_digest", "result", "wall_micros"}
        json.dumps(entry)

    def test_cost_violation(self, knowledge):
        config = Configuration.of(A=[2, 4], M=[2, 4], D=[1, 5])
        (_, v), = analyze(knowledge, ExactEngine(), [config])
        assert v.failure_prob <= 0.02 and v.expected_cost > 8.0
        assert v.compliant is Compliance.VIOLATING

    def test_empty(self, knowledge):
        with pytest.raises(ModelError):
            analyze(knowledge, ExactEngine(), [])

    def test_engine_error_marks_undecided(self, knowledge, compliant_config):
        class Flaky(ExactEngine):
            def verify(self, workflow, config, params, requirements):
                if config[A] == (1,):
                    raise RuntimeError("boom")
                return super().verify(workflow, config, params, requirements)

        bad = Configuration.of(A=[1], M=[1], D=[1])
        result = analyze(knowledge, Flaky(), [bad, compliant_config])
        assert result[0][1].compliant is Compliance.UNDECIDED
        assert result[1][1].compliant is Compliance.COMPLIANT


class TestPlan:
    def test_singleton(self, compliant_config):
        p = plan([(compliant_config, verdict(0.01, 7.9, Compliance.COMPLIANT))])
        assert p.configuration == compliant_config and not p.degraded

    def test_cheapest_compliant_with_ties(self):
        cs = [Configuration.of(A=[i], M=[1], D=[1]) for i in range(1, 5)]
        vs = [verdict(0.01, 5.0, Compliance.COMPLIANT), verdict(0.005, 5.0, Compliance.COMPLIANT),
              verdict(0.001, 1.0, Compliance.VIOLATING), verdict(0.005, 5.0, Compliance.COMPLIANT)]
        p = plan(list(zip(cs, vs)), current=cs[1])
        assert p.index == 1 and p.noop

    def test_degraded(self):
        cs = [Configuration.of(A=[i], M=[1], D=[1]) for i in range(1, 4)]
        vs = [verdict(0.3, 1.0, Compliance.VIOLATING), verdict(0.1, 9.0, Compliance.UNDECIDED),
              verdict(0.1, 5.0, Compliance.VIOLATING)]
        p = plan(list(zip(cs, vs)))
        assert p.degraded and p.index == 2

    def test_empty(self):
        with pytest.raises(ModelError):
            plan([])

    @given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 20), st.sampled_from(list(Compliance))),
                    min_size=1, max_size=20))
    def test_never_violating_when_compliant_exists(self, rows):
        cs = [Configuration.of(A=[i + 1], M=[1], D=[1]) for i in range(len(rows))]
        p = plan([(c, verdict(*r)) for c, r in zip(cs, rows)])
        if any(r[2] is Compliance.COMPLIANT for r in rows):
            assert p.verdict.compliant is Compliance.COMPLIANT
            assert p.verdict.expected_cost == min(r[1] for r in rows if r[2] is Compliance.COMPLIANT)

    def test_brute_force_optimum(self, registry, workflow, requirements):
        k = Knowledge(registry, workflow, requirements, Configuration.of(A=[2], M=[2], D=[1]))
        candidates = enumerate_configurations(registry, workflow, 2)
        chosen = plan(analyze(k, ExactEngine(), candidates))
        cost, p, binding = oracles.brute_force_optimum()
        assert not chosen.degraded
        assert chosen.verdict.expected_cost == pytest.approx(cost, abs=1e-12)
        assert chosen.verdict.failure_prob == pytest.approx(p, abs=1e-12)
        assert chosen.configuration.to_dict() == binding


class TestExecute:
    def test_swap(self, knowledge, compliant_config):
        p = AdaptationPlan(compliant_config, verdict(0.01, 7.9, Compliance.COMPLIANT), 0, False, False)
        execute(p, knowledge, 1.0, "tick")
        assert knowledge.configuration == compliant_config
        assert knowledge.evidence.kinds() == ["adaptation"]

    def test_noop(self, knowledge, depth1_config):
        before = knowledge.configuration
        execute(AdaptationPlan(depth1_config, verdict(0.07, 18, Compliance.VIOLATING), 0, True, True), knowledge)
        assert knowledge.configuration is before
        assert len(knowledge.evidence) == 1

    def test_stale_plan(self, knowledge, depth1_config):
        stale = Configuration.of(A=[9], M=[2], D=[1])
        execute(AdaptationPlan(stale, verdict(0.01, 1, Compliance.COMPLIANT), 0, False, False), knowledge)
        assert knowledge.configuration == depth1_config
        assert "stale-plan" in knowledge.pending
        assert knowledge.evidence.kinds() == ["discarded-plan"]


class TestIntegrate:
    services = [ConcreteService(1, IR, 0.1, 2.0), ConcreteService(2, IR, 0.1, 1.0), ConcreteService(3, IR, 0.1, 3.0)]

    def test_binds_cheapest(self, knowledge):
        integrate_service_type(knowledge, self.services, 2.0)
        assert knowledge.workflow.inform_relatives_enabled
        assert knowledge.configuration[IR] == (2,)

    def test_idempotent(self, knowledge):
        integrate_service_type(knowledge, self.services)
        snapshot = (knowledge.workflow, knowledge.configuration, len(knowledge.evidence))
        integrate_service_type(knowledge, self.services)
        assert (knowledge.workflow, knowledge.configuration, len(knowledge.evidence)) == snapshot

    def test_requires_ir(self, knowledge):
        with pytest.raises(ModelError):
            integrate_service_type(knowledge, [ConcreteService(6, A, 0.1, 1.0)])


class TestTrigger:
    def test_tick(self, knowledge):
        assert adaptation_trigger(knowledge, 0.0).reasons == ("tick",)

    def test_mid_hour_quiet(self, knowledge):
        knowledge.next_tick = 1.0
        assert not adaptation_trigger(knowledge, 0.5)

    def test_pending(self, knowledge):
        knowledge.next_tick = 1.0
        knowledge.pending.add("refresh")
        assert adaptation_trigger(knowledge, 0.5).reasons == ("refresh",)

    def test_drift(self, registry, workflow, requirements, depth1_config):
        k = Knowledge(registry, workflow, requirements, depth1_config, window=5000, tau=0.02)
        k.next_tick = 1.0
        k.planned_values = {A2: 0.04}
        rng = random.Random(0)
        for _ in range(5000):
            monitor_update(k, outcome([(A, A2, rng.random() >= 0.09, 12.0)]))
        decision = adaptation_trigger(k, 0.5)
        assert decision and "drift" in decision.reasons

    def test_small_change_no_drift(self, registry, workflow, requirements, depth1_config):
        k = Knowledge(registry, workflow, requirements, depth1_config, window=200, tau=0.02)
        k.next_tick = 1.0
        k.planned_values = {A2: 0.04}
        for i in range(200):
            monitor_update(k, outcome([(A, A2, i % 25 != 0, 12.0)]))
        assert not adaptation_trigger(k, 0.5)


class TestCandidates:
    def test_full_enumeration(self, knowledge):
        assert len(generate_candidates(knowledge, 2, 20000, 6)) == 15625

    def test_pruned(self):
        services = [ConcreteService(i, op, 0.01 * i, float(21 - i)) for op in (A, M, D) for i in range(1, 21)]
        reg = ServiceRegistry(tuple(services))
        k = Knowledge(reg, WorkflowSpec(), RequirementSpec(), Configuration.of(A=[1], M=[1], D=[1]))
        opts = prune_options(k, A, 2, 6)
        assert len(opts) <= 12 and (1, 2) in opts and (20,) in opts
        cands = generate_candidates(k, 2, 20000, 6)
        assert 0 < len(cands) <= 12 ** 3


class TestController:
    def test_episode_loop_records(self):
        from pas.scenario import default_scenario
        from pas.simulator import run_episode
        scen = default_scenario()
        ctrl = MapeController.for_scenario(scen, SmcEngine(SmcStrategy(0.1, 0.1, 1)))
        trace = run_episode(scen, ctrl)
        assert len(trace.verifications) >= 5
        assert len(trace.adaptations) == len(trace.verifications)
        kinds = set(ctrl.knowledge.evidence.kinds())
        assert {"verification", "adaptation"} <= kinds

    def test_s1_default_configuration(self, registry):
        from pas.simulator import ScenarioSpec
        ctrl = MapeController.for_scenario(ScenarioSpec("s1", registry), ExactEngine())
        assert ctrl.initial_configuration == Configuration.of(A=[2], M=[2], D=[1])
