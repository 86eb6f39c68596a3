"""Command-line entry point: ``pas run|bench|verify|report``.

Exit codes: 0 success, 1 usage error, 2 invalid input, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from .bench import make_engine, run_suite, scalability_sweep
from .engine import EngineConfig, ModelParams
from .model import ModelError
from .report import emit_report, load_report
from .scenario import (ScenarioError, SuiteSpec, bundled_path, parse_config_flag, parse_scenario, parse_suite)
from .simulator import EpisodeAborted, run_episode
from .smc import DEFAULT_STRATEGIES

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _strategy(text: str) -> tuple[float, float]:
    try:
        e, a = (float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected E,A (e.g. 0.05,0.05), got {text!r}") from None
    if not (0 < e < 1 and 0 < a < 1):
        raise argparse.ArgumentTypeError(f"E and A must lie in (0, 1), got {text!r}")
    return e, a


def _u64(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an unsigned 64-bit integer, got {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed out of range: {text}")
    return v


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        v = 0
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pas", description="TAS self-adaptation workbench with RQV and RSMC assurance engines.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, scenario=True):
        if scenario:
            sp.add_argument("--scenario", help="scenario JSON (default: bundled tas-default.json)")
        sp.add_argument("--engine", choices=["rqv", "rqv-parametric", "rsmc"])
        sp.add_argument("--strategy", type=_strategy, action="append", metavar="E,A",
                        help="RSMC approximation interval and confidence; repeatable for bench")
        sp.add_argument("--seed", type=_u64, help="overrides PAS_SEED and the scenario seed")
        sp.add_argument("-v", "--verbose", action="store_true")

    run = sub.add_parser("run", help="simulate one episode")
    common(run)
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--config", help="initial configuration, e.g. 'A=4,1;M=4,2;D=4,1'")

    bench = sub.add_parser("bench", help="run a benchmark suite")
    common(bench)
    bench.add_argument("--suite", help="suite JSON")
    bench.add_argument("--reps", type=_positive)
    bench.add_argument("--workers", type=_positive, default=1)
    bench.add_argument("--out", required=True)
    bench.add_argument("--timing", choices=["wall", "none"], default="wall",
                       help="'none' writes 0 wall-time so the CSV is byte-reproducible")
    bench.add_argument("--sweep", action="store_true", help="also run the registry-size sweep")

    ver = sub.add_parser("verify", help="one-shot verification of a configuration")
    common(ver)
    ver.add_argument("--config", help="configuration to verify, e.g. 'A=2;M=2;D=1'")
    ver.add_argument("--json", action="store_true", help="print the verdict as JSON")

    rep = sub.add_parser("report", help="regenerate report artifacts from stored raw rows")
    rep.add_argument("--out", required=True, help="directory written by 'pas bench'")
    rep.add_argument("-v", "--verbose", action="store_true")
    return p


def _seed(args, file_seed: int) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("PAS_SEED")
    if env:
        try:
            return _u64(env)
        except argparse.ArgumentTypeError as exc:
            raise UsageError(f"PAS_SEED: {exc}") from None
    return file_seed


def _engine_configs(args, default="rsmc") -> list[EngineConfig]:
    engine = args.engine or default
    if engine != "rsmc":
        if args.strategy:
            raise UsageError(f"--strategy only applies to --engine rsmc, not {engine}")
        return [EngineConfig(engine)]
    strategies = args.strategy or [(0.05, 0.05)]
    return [EngineConfig("rsmc", e, a) for e, a in strategies]


def _load_scenario(args):
    path = args.scenario or bundled_path("tas-default.json")
    scen = parse_scenario(path)
    return scen.with_seed(_seed(args, scen.seed))


def cmd_verify(args) -> int:
    engines = _engine_configs(args, "rqv")
    if len(engines) > 1:
        raise UsageError("verify takes a single --strategy")
    scen = _load_scenario(args)
    config = parse_config_flag(args.config) if args.config else scen.initial_configuration
    if config is None:
        raise ScenarioError(["--config: scenario has no initial_configuration; pass --config"])
    try:
        config.resolve(scen.initial_registry)
    except ModelError as exc:
        raise ScenarioError([f"--config: {exc}"]) from None
    params = ModelParams.from_registry(scen.initial_registry, scen.workflow)
    cfg = engines[0]
    engine = make_engine(cfg, scen.seed)
    verdict = engine.verify(scen.workflow, config, params, scen.requirements)
    req = scen.requirements
    out = {
        "configuration": str(config),
        "engine": cfg.label,
        "failure_probability": verdict.failure_prob,
        "interval": None if verdict.ci_low is None else [verdict.ci_low, verdict.ci_high],
        "expected_cost": verdict.expected_cost,
        "requirements": {"max_failure_prob": req.max_failure_prob, "max_avg_cost": req.max_avg_cost},
        "verdict": verdict.compliant.value,
        "evidence": {"method": verdict.evidence.method, "volume": verdict.evidence.volume,
                     "wall_micros": round(verdict.evidence.wall_micros, 1)},
        "parameters_digest": params.digest(),
    }
    if args.json:
        out["evidence"].pop("wall_micros")
        print(json.dumps(out, indent=2))
        return EXIT_OK
    print(f"configuration        {out['configuration']}")
    print(f"engine               {cfg.label}")
    print(f"failure probability  {verdict.failure_prob:.10g}")
    if verdict.ci_low is not None:
        print(f"interval             [{verdict.ci_low:.10g}, {verdict.ci_high:.10g}]")
    print(f"expected cost        {verdict.expected_cost:.10g}")
    print(f"requirements         p <= {req.max_failure_prob:g}, cost <= {req.max_avg_cost:g}")
    print(f"verdict              {verdict.compliant.value}")
    unit = "samples" if cfg.engine == "rsmc" else "states"
    print(f"evidence             {verdict.evidence.volume} {unit} ({verdict.evidence.method})")
    return EXIT_OK


def cmd_run(args) -> int:
    engines = _engine_configs(args)
    if len(engines) > 1:
        raise UsageError("run takes a single --strategy")
    scen = _load_scenario(args)
    if args.config:
        config = parse_config_flag(args.config)
        scen = replace(scen, initial_configuration=config)
        problems = scen.validate()
        if problems:
            raise ScenarioError(problems)
    from .mape import MapeController
    cfg = engines[0]
    controller = MapeController.for_scenario(scen, make_engine(cfg, scen.seed), cfg.label)
    out = Path(args.out)
    code = EXIT_OK
    try:
        trace = run_episode(scen, controller)
    except EpisodeAborted as exc:
        trace = exc.trace
        print(f"pas: episode aborted: {exc}", file=sys.stderr)
        code = EXIT_RUNTIME
    out.mkdir(parents=True, exist_ok=True)
    (out / "trace.jsonl").write_text(trace.to_jsonl())
    if controller.knowledge is not None:
        (out / "evidence.jsonl").write_text(controller.knowledge.evidence.to_lines())
    fails = sum(o.workflow_failed for o in trace.invocations)
    n = len(trace.invocations)
    print(f"{scen.name} seed={scen.seed} engine={cfg.label}: {n} invocations, "
          f"failure fraction {fails / n if n else 0:.4f}, "
          f"{sum(1 for a in trace.adaptations if not a.noop)} adaptations, "
          f"{len(trace.verifications)} verification rounds -> {out}")
    return code


def cmd_bench(args) -> int:
    if args.suite and args.scenario:
        raise UsageError("pass either --suite or --scenario, not both")
    if args.suite:
        suite = parse_suite(args.suite)
    else:
        scen = parse_scenario(args.scenario or bundled_path("tas-default.json"))
        engines = [EngineConfig("rsmc", e, a) for e, a in DEFAULT_STRATEGIES]
        suite = SuiteSpec(scen.name, [scen], engines)
    if args.engine or args.strategy:
        engines = _engine_configs(args)
    else:
        engines = suite.engines or [EngineConfig("rsmc", 0.05, 0.05)]
    scenarios = [s.with_seed(_seed(args, s.seed)) for s in suite.scenarios]
    reps = args.reps or suite.repetitions
    report = run_suite(scenarios, engines, reps, workers=args.workers, timing=args.timing)
    if args.sweep:
        report.sweep = scalability_sweep(scenarios[0], suite.sweep_sizes,
                                         [EngineConfig("rqv"), EngineConfig("rsmc", 0.05, 0.05)],
                                         seed=scenarios[0].seed)
    written = emit_report(report, args.out)
    failed = report.failed()
    print(f"{len(report.episodes)} episodes ({len(failed)} failed), {len(report.rows)} rows -> {args.out}")
    for w in written:
        logging.getLogger(__name__).info("wrote %s", w)
    return EXIT_RUNTIME if failed else EXIT_OK


def cmd_report(args) -> int:
    try:
        report = load_report(args.out)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ScenarioError([f"{args.out}: cannot load stored results: {exc}"]) from None
    emit_report(report, args.out)
    print(f"regenerated report for {len(report.episodes)} episodes in {args.out}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "bench": cmd_bench, "verify": cmd_verify, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"pas: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ScenarioError as exc:
        for e in exc.errors:
            print(f"pas: invalid input: {e}", file=sys.stderr)
        return EXIT_INPUT
    except FileNotFoundError as exc:
        print(f"pas: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ModelError as exc:
        print(f"pas: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - documented exit code 3
        logging.getLogger(__name__).debug("runtime failure", exc_info=True)
        print(f"pas: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
