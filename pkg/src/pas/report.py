"""Benchmark report artifacts: CSV tables, SVG figures and a comparison table.

Everything is rendered in memory first and only then written, so a failure
leaves no partial set of files behind.
"""

from __future__ import annotations

import csv
import io
import json
import os
import statistics
from collections import defaultdict
from dataclasses import asdict
from pathlib import Path

from .bench import CSV_HEADER, BenchmarkReport, EpisodeResult, HourRow, Summary, SweepPoint

RESULTS_CSV = "results.csv"
AGGREGATES_CSV = "aggregates.csv"
EPISODES_JSON = "episodes.json"
COMPARISON_TXT = "comparison.txt"

AGGREGATE_HEADER = ("scenario", "engine", "metric") + tuple(Summary.__dataclass_fields__)


def _cell(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render_results_csv(rows: list[HourRow], timing: str = "wall") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        vals = list(r.values())
        if timing == "none":
            vals[CSV_HEADER.index("verification_wall_micros")] = 0.0
        w.writerow([_cell(v) for v in vals])
    return buf.getvalue()


_TYPES = {f: t for f, t in HourRow.__annotations__.items()}


def read_results_csv(text: str) -> list[HourRow]:
    reader = csv.reader(io.StringIO(text))
    header = tuple(next(reader, ()))
    if header != CSV_HEADER:
        raise ValueError(f"unexpected results header: {','.join(header)}")
    rows = []
    for line_no, rec in enumerate(reader, start=2):
        if len(rec) != len(CSV_HEADER):
            raise ValueError(f"line {line_no}: expected {len(CSV_HEADER)} fields, got {len(rec)}")
        vals = {}
        for name, raw in zip(CSV_HEADER, rec):
            kind = _TYPES[name]
            try:
                if kind == "bool":
                    vals[name] = raw == "1"
                elif kind == "int":
                    vals[name] = int(raw)
                elif kind == "float":
                    vals[name] = float(raw)
                else:
                    vals[name] = raw
            except ValueError:
                raise ValueError(f"line {line_no}: bad {name} value {raw!r}") from None
        rows.append(HourRow(**vals))
    return rows


def episode_means(rows: list[HourRow]) -> dict[tuple[str, str], dict[str, list[float]]]:
    """Per (scenario, engine): one mean-hourly value per episode, for box plots."""
    per_run = defaultdict(list)
    for r in rows:
        per_run[(r.scenario, r.engine, r.run_id)].append(r)
    out = defaultdict(lambda: defaultdict(list))
    for (scen, eng, _), hours in per_run.items():
        out[(scen, eng)]["failure_fraction"].append(statistics.fmean(h.failure_fraction for h in hours))
        out[(scen, eng)]["mean_cost"].append(statistics.fmean(h.mean_cost for h in hours))
    return out


def aggregate_rows(rows: list[HourRow]) -> list[tuple]:
    """Summaries that can be recomputed from the raw rows alone."""
    hourly = defaultdict(lambda: defaultdict(list))
    for r in rows:
        g = hourly[(r.scenario, r.engine)]
        g["hourly_failure_fraction"].append(r.failure_fraction)
        g["hourly_mean_cost"].append(r.mean_cost)
        g["r1_violation"].append(float(r.r1_violation))
        g["r2_violation"].append(float(r.r2_violation))
        g["verification_wall_micros"].append(r.verification_wall_micros)
        g["evidence_volume"].append(float(r.evidence_volume))
    means = episode_means(rows)
    out = []
    for key in hourly:
        metrics = dict(hourly[key])
        metrics["episode_failure_fraction"] = means[key]["failure_fraction"]
        metrics["episode_mean_cost"] = means[key]["mean_cost"]
        for name in sorted(metrics):
            s = Summary.of(metrics[name])
            out.append(key + (name,) + tuple(asdict(s).values()))
    return out


def render_aggregates_csv(rows: list[HourRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(AGGREGATE_HEADER)
    for rec in aggregate_rows(rows):
        w.writerow([_cell(v) for v in rec])
    return buf.getvalue()


def _episodes_payload(report: BenchmarkReport) -> dict:
    return {
        "timing": report.timing,
        "metadata": report.metadata,
        "episodes": [{"scenario": e.scenario, "engine": e.engine, "repetition": e.repetition, "seed": e.seed,
                      "error": e.error, "summary": e.summary} for e in report.episodes],
        "sweep": [asdict(p) for p in report.sweep],
    }


def load_report(directory) -> BenchmarkReport:
    """Rebuild a report from stored raw rows, without re-simulating."""
    d = Path(directory)
    rows = read_results_csv((d / RESULTS_CSV).read_text())
    payload = json.loads((d / EPISODES_JSON).read_text())
    by_key = defaultdict(list)
    for r in rows:
        by_key[(r.scenario, r.engine, r.repetition)].append(r)
    episodes = []
    for e in payload["episodes"]:
        key = (e["scenario"], e["engine"], e["repetition"])
        episodes.append(EpisodeResult(*key, e["seed"], by_key.pop(key, []), e["summary"], e["error"]))
    for key, rs in by_key.items():
        episodes.append(EpisodeResult(*key, 0, rs))
    sweep = [SweepPoint(**p) for p in payload.get("sweep", [])]
    return BenchmarkReport(episodes, payload.get("timing", "wall"), sweep, payload.get("metadata", {}))


def _svg(fig) -> str:
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    return buf.getvalue()


def render_figures(report: BenchmarkReport, threshold: float = 0.02) -> dict[str, str]:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    figs = {}
    rows = report.rows
    with matplotlib.rc_context({"svg.hashsalt": "pas", "svg.fonttype": "none"}):
        means = episode_means(rows)
        if means:
            keys = sorted(means)
            fig, ax = plt.subplots(figsize=(7, 4))
            ax.boxplot([means[k]["failure_fraction"] for k in keys], whis=1.5)
            ax.set_xticks(range(1, len(keys) + 1), [f"{e}\n{s}" for s, e in keys], fontsize=7)
            ax.axhline(threshold, linestyle="--", color="grey")
            ax.set_ylabel("mean hourly failure fraction")
            ax.set_title("Observed failure rate per episode")
            fig.tight_layout()
            figs["fig_failure_rate.svg"] = _svg(fig)
            plt.close(fig)

        timing = defaultdict(list)
        for e in report.episodes:
            timing[e.engine].extend(e.summary.get("verification_micros", []))
        if report.timing == "wall" and any(timing.values()):
            names = [n for n in timing if timing[n]]
            fig, ax = plt.subplots(figsize=(7, 4))
            ax.boxplot([[x / 1000 for x in timing[n]] for n in names], whis=1.5)
            ax.set_xticks(range(1, len(names) + 1), names, fontsize=7)
            ax.set_ylabel("verification time per round (ms)")
            ax.set_title("Verification time")
            fig.tight_layout()
            figs["fig_verification_time.svg"] = _svg(fig)
            plt.close(fig)

        if report.sweep:
            fig, ax = plt.subplots(figsize=(6, 4))
            for eng in dict.fromkeys(p.engine for p in report.sweep):
                pts = [p for p in report.sweep if p.engine == eng]
                ax.plot([p.size for p in pts], [p.mean_micros / 1000 for p in pts], marker="o", label=eng)
            ax.set_xlabel("instances per service type")
            ax.set_ylabel("mean adaptation time (ms)")
            ax.set_yscale("log")
            ax.legend(fontsize=7)
            ax.set_title("Adaptation time versus registry size")
            fig.tight_layout()
            figs["fig_scalability.svg"] = _svg(fig)
            plt.close(fig)
    return figs


def _median_or_none(values):
    return statistics.median(values) if values else None


def comparison_table(report: BenchmarkReport) -> str:
    """Criteria-by-engine comparison in plain text."""
    engines = report.engines()
    if not engines:
        return "no episodes\n"
    rows = report.rows
    by_engine = defaultdict(list)
    for r in rows:
        by_engine[r.engine].append(r)
    eps = defaultdict(list)
    for e in report.episodes:
        eps[e.engine].append(e)

    def fmt(x, spec):
        return "n/a" if x is None else format(x, spec)

    def cell(criterion, eng):
        hrs = by_engine[eng]
        ss = [e.summary for e in eps[eng] if e.summary]
        if criterion == "Inaccuracy handling":
            return "interval +/-E at 1-A" if eng.startswith("rsmc") else "exact value at point estimates"
        if criterion == "Competing criteria tradeoff":
            r1 = statistics.fmean(h.r1_violation for h in hrs) if hrs else None
            cost = statistics.fmean(h.mean_cost for h in hrs) if hrs else None
            return f"R1 viol {fmt(r1, '.1%')}, cost {fmt(cost, '.2f')}"
        if criterion == "Variability handling":
            ok = statistics.fmean(not (h.r1_violation or h.r2_violation) for h in hrs) if hrs else None
            return f"{fmt(ok, '.1%')} hours compliant"
        if criterion == "Evidence basis":
            vol = sum(s.get("evidence_volume", 0) for s in ss)
            calls = sum(s.get("verification_calls", 0) for s in ss)
            unit = "samples" if eng.startswith("rsmc") else "states"
            return f"{vol / calls:.0f} {unit}/check" if calls else "n/a"
        if criterion == "Timeliness":
            if report.timing != "wall":
                return "not timed"
            med = _median_or_none([x for s in ss for x in s.get("verification_micros", [])])
            return f"median {fmt(None if med is None else med / 1000, '.2f')} ms/round"
        if criterion == "Computational overhead":
            if report.timing != "wall":
                return "not timed"
            frac = _median_or_none([s["overhead_fraction"] for s in ss if "overhead_fraction" in s])
            return f"{fmt(frac, '.1%')} of episode time"
        raise KeyError(criterion)

    criteria = ["Inaccuracy handling", "Competing criteria tradeoff", "Variability handling", "Evidence basis",
                "Timeliness", "Computational overhead"]
    table = [["Criterion"] + engines] + [[c] + [cell(c, e) for e in engines] for c in criteria]
    widths = [max(len(r[i]) for r in table) for i in range(len(table[0]))]
    lines = []
    for i, r in enumerate(table):
        lines.append("  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def render_report(report: BenchmarkReport) -> dict[str, str]:
    files = {
        RESULTS_CSV: render_results_csv(report.rows, report.timing),
        AGGREGATES_CSV: render_aggregates_csv(report.rows if report.timing == "wall"
                                              else read_results_csv(render_results_csv(report.rows, "none"))),
        EPISODES_JSON: json.dumps(_episodes_payload(report), indent=2, sort_keys=True) + "\n",
        COMPARISON_TXT: comparison_table(report),
    }
    files.update(render_figures(report))
    return files


def emit_report(report: BenchmarkReport, path) -> list[Path]:
    """Write all artifacts into directory ``path``; returns the written files."""
    files = render_report(report)
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    staged = []
    try:
        for name, text in files.items():
            tmp = out / f".{name}.tmp"
            tmp.write_text(text)
            staged.append((tmp, out / name))
    except OSError:
        for tmp, _ in staged:
            tmp.unlink(missing_ok=True)
        raise
    for tmp, final in staged:
        os.replace(tmp, final)
    return [final for _, final in staged]
