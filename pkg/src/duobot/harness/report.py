"""Run reports: budget checks, structured output and the summary table."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from ..fabric import latency_stats, wake_latencies

REPORT_FORMAT = "duobot-report"
FORMATS = ("json", "text")


class UsageError(ValueError):
    pass


@dataclass(frozen=True)
class BudgetCheck:
    name: str
    measured: float | None
    bound: float
    verdict: str             # PASS or FAIL; nothing measured passes vacuously

    @classmethod
    def at_most(cls, name: str, measured: float | None, bound: float) -> "BudgetCheck":
        ok = measured is None or measured <= bound
        return cls(name, measured, bound, "PASS" if ok else "FAIL")


@dataclass
class RunReport:
    scenario: str
    topology: str
    seed: int
    n_utterances: int
    wake_latency: dict | None
    detectors: dict[str, dict]
    dialog_transitions: dict[str, int]
    dialog_rejections: int
    tracking: list[dict]
    eye_log: list[str]
    budgets: list[BudgetCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(b.verdict == "PASS" for b in self.budgets)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["format"] = REPORT_FORMAT
        d["version"] = 1
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        if d.get("format") != REPORT_FORMAT:
            raise ValueError("not a duobot report")
        d = {k: v for k, v in d.items() if k not in ("format", "version")}
        d["budgets"] = [BudgetCheck(**b) for b in d["budgets"]]
        return cls(**d)


def budget_checks(trace: Sequence[dict], budgets: dict[str, float]) -> list[BudgetCheck]:
    """Evaluate the declared budgets from the raw trace alone."""
    lat, missed = wake_latencies(trace)
    stats = latency_stats(lat, missed)
    settles = [r["settle_ms"] for r in trace if r["ev"] == "settle"]
    measured = {
        "wake_latency_mean_ms": stats.mean_ms if stats else None,
        "wake_latency_p95_ms": stats.p95_ms if stats else None,
        # a step that never settles counts as infinitely slow
        "tracking_settle_ms": (max(float("inf") if s is None else s for s in settles)
                               if settles else None),
        "eye_rejections": float(sum(1 for r in trace if r["ev"] == "eye" and not r["ok"])),
    }
    out = []
    for name in sorted(budgets):
        if name not in measured:
            raise ValueError(f"unknown budget {name!r}")
        out.append(BudgetCheck.at_most(name, measured[name], budgets[name]))
    return out


def transition_counts(trace: Sequence[dict]) -> tuple[dict[str, int], int]:
    c: Counter[str] = Counter()
    rejected = 0
    for r in trace:
        if r["ev"] != "dialog":
            continue
        if r["to"] is None:
            rejected += 1
        else:
            c[f"{r['from']}->{r['to']}"] += 1
    return dict(sorted(c.items())), rejected


def eye_log(trace: Sequence[dict]) -> list[str]:
    out, last = [], "BLUE NONE"
    for r in trace:
        if r["ev"] == "eye" and r["ok"] and r["state"] != last:
            out.append(f"{r['t']:.3f} {r['state']}")
            last = r["state"]
    return out


def _fmt(x) -> str:
    if x is None:
        return "-"
    if isinstance(x, float):
        return f"{x:.3f}"
    return str(x)


def summary_table(report: RunReport) -> str:
    lines = [f"scenario {report.scenario}  topology {report.topology}  seed {report.seed}  "
             f"utterances {report.n_utterances}"]
    wl = report.wake_latency
    if wl:
        lines.append(f"wake latency ms: mean {wl['mean_ms']:.3f}  median {wl['median_ms']:.3f}  "
                     f"p95 {wl['p95_ms']:.3f}  n {wl['n']}  missed {wl['n_missed']}")
    else:
        lines.append("wake latency ms: no detections")
    for alg, m in sorted(report.detectors.items()):
        lines.append(f"detector {alg}: FP {_fmt(m['false_positive_rate'])}  "
                     f"FN {_fmt(m['false_negative_rate'])}  threshold {_fmt(m['threshold'])}")
    lines.append("")
    w = max([len("budget")] + [len(b.name) for b in report.budgets])
    lines.append(f"{'budget':<{w}}  {'measured':>12}  {'bound':>10}  verdict")
    for b in report.budgets:
        lines.append(f"{b.name:<{w}}  {_fmt(b.measured):>12}  {_fmt(b.bound):>10}  {b.verdict}")
    return "\n".join(lines) + "\n"


def emit_report(report: RunReport, fmt: str = "json", path: str | Path | None = None) -> str:
    """Render as ``json`` (structured, round-trips) or ``text`` (summary table)."""
    if fmt == "json":
        text = json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n"
    elif fmt == "text":
        text = summary_table(report)
    else:
        raise UsageError(f"unknown report format {fmt!r}; choose from {', '.join(FORMATS)}")
    if path is not None:
        Path(path).write_text(text)
    return text


def parse_report(text: str) -> RunReport:
    return RunReport.from_dict(json.loads(text))
