"""Command-line entry point: ``duobot <command> ...`` (or ``python3 -m duobot``)."""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
from pathlib import Path

from .phonostream import CorpusSpec, generate_corpus, read_corpus, write_corpus

DEFAULT_NOISE = 0.6


def _corpus_gen(a: argparse.Namespace) -> int:
    spec = CorpusSpec(a.positives, a.negatives, a.confusables)
    streams = generate_corpus(spec, a.noise, a.seed)
    write_corpus(streams, a.out, {"seed": a.seed, "noise": a.noise, "positives": a.positives,
                                  "negatives": a.negatives, "confusables": a.confusables})
    print(f"wrote {len(streams)} streams to {a.out}")
    return 0


def _load_or_generate(path: str | None, seed: int, noise: float):
    if path:
        return read_corpus(path)
    return generate_corpus(CorpusSpec(), noise, seed)


def _kws_run(a: argparse.Namespace) -> int:
    from .harness.config import default_config
    from .wakeword.detect import Algorithm
    from .wakeword.evaluate import default_models, evaluate_detector, make_spotter

    alg = Algorithm(a.algo.upper())
    thr = a.threshold if a.threshold is not None else default_config().wakeword.thresholds[alg]
    corpus = read_corpus(a.corpus)
    m = evaluate_detector(make_spotter(alg, thr, default_models()), corpus, alg.value, thr)
    text = json.dumps(m.to_dict(), indent=1, sort_keys=True) + "\n"
    if a.report:
        Path(a.report).write_text(text)
    print(text, end="")
    return 0


def _calibrate(a: argparse.Namespace) -> int:
    from .harness.calibrate import calibrate
    from .harness.config import default_config
    from .harness.scenario import load_scenario

    cfg = default_config()
    corpus = _load_or_generate(a.corpus, a.seed, cfg.wakeword.noise)
    scenario = None if a.skip_contention else load_scenario(a.scenario)
    log = (lambda s: print(s, file=sys.stderr)) if a.verbose else None
    new, rep = calibrate(corpus, cfg, scenario, progress=log)
    if a.out:
        new.save(a.out)
    text = json.dumps(rep.to_dict(), indent=1, sort_keys=True) + "\n"
    if a.report:
        Path(a.report).write_text(text)
    for d in rep.detectors:
        print(f"{d.algorithm:9s} threshold {d.chosen}  feasible {d.feasible}")
    if rep.contention:
        c = rep.contention
        print(f"contention wake={c.wake_cost} lvcsr={c.lvcsr_cost}  dual {c.dual_mean_ms:.1f} ms  "
              f"single {c.single_mean_ms:.1f} ms  feasible {c.feasible}")
    print("FEASIBLE" if rep.feasible else "INFEASIBLE: see the frontier in the report")
    return 0 if rep.feasible else 1


def _config(a: argparse.Namespace):
    from .harness.config import RunConfig
    return RunConfig.load(a.config) if a.config else RunConfig.load()


def _run(a: argparse.Namespace) -> int:
    from .fabric import write_trace
    from .harness.report import FORMATS, UsageError, emit_report
    from .harness.runner import run_scenario
    from .harness.scenario import load_scenario

    if a.format not in FORMATS:
        raise UsageError(f"unknown report format {a.format!r}; choose from {', '.join(FORMATS)}")
    sc = load_scenario(a.scenario)
    report, trace = run_scenario(sc, a.topology, _config(a), a.seed)
    if a.trace:
        write_trace(a.trace, trace)
    if a.report:
        emit_report(report, a.format, a.report)
    print(emit_report(report, "text"), end="")
    return 0 if report.passed else 1


def _fabric_run(a: argparse.Namespace) -> int:
    from .fabric import measure_wake_latency, write_trace
    from .harness.runner import boot
    from .harness.scenario import load_scenario

    run = boot(load_scenario(a.scenario), a.topology, _config(a), a.seed)
    trace = run.finish()
    write_trace(a.trace, trace)
    stats = measure_wake_latency(trace)
    print(f"{len(trace)} records, {run.sim.n_processed} events -> {a.trace}")
    if stats:
        print(f"wake latency mean {stats.mean_ms:.3f} ms  median {stats.median_ms:.3f}  "
              f"p95 {stats.p95_ms:.3f}  n {stats.n}")
    return 0


def _console(a: argparse.Namespace) -> int:
    from .harness.console import Console

    c = Console(a.topology, _config(a), a.seed)
    interactive = sys.stdin.isatty()
    if interactive:
        print("duobot console; type help")
        sys.stdout.write("> ")
        sys.stdout.flush()
    c.loop(sys.stdin, sys.stdout if interactive else None)
    return 0


def _backend_serve(a: argparse.Namespace) -> int:
    from .backend import FormService, serve

    host, _, port = a.listen.rpartition(":")
    service = FormService.open(a.log)
    print(f"backend on {host or '127.0.0.1'}:{port}, log {a.log}", file=sys.stderr)
    try:
        asyncio.run(serve(service, host or "127.0.0.1", int(port)))
    except KeyboardInterrupt:
        pass
    finally:
        service.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="duobot", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    corpus = sub.add_parser("corpus", help="benchmark corpora").add_subparsers(dest="action", required=True)
    g = corpus.add_parser("gen", help="generate a labelled corpus")
    g.add_argument("--positives", type=int, default=200)
    g.add_argument("--negatives", type=int, default=1000)
    g.add_argument("--confusables", type=int, default=1000)
    g.add_argument("--noise", type=float, default=DEFAULT_NOISE)
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=_corpus_gen)

    kws = sub.add_parser("kws", help="keyword spotting").add_subparsers(dest="action", required=True)
    k = kws.add_parser("run", help="evaluate one detector on a corpus")
    k.add_argument("--algo", required=True, choices=["phonetic", "hmm", "lm"])
    k.add_argument("--corpus", required=True)
    k.add_argument("--threshold", type=float, default=None, help="default: the shipped config")
    k.add_argument("--report")
    k.set_defaults(fn=_kws_run)

    c = sub.add_parser("calibrate", help="recover thresholds and contention costs")
    c.add_argument("--corpus", help="corpus file (default: generate the default corpus)")
    c.add_argument("--seed", type=int, default=42, help="seed for a generated corpus")
    c.add_argument("--scenario", default="reference")
    c.add_argument("--skip-contention", action="store_true")
    c.add_argument("--out", help="write the calibrated config here")
    c.add_argument("--report", help="write the calibration report (JSON) here")
    c.add_argument("-v", "--verbose", action="store_true")
    c.set_defaults(fn=_calibrate)

    r = sub.add_parser("run", help="run a scenario and report budgets")
    r.add_argument("--scenario", default="reference")
    r.add_argument("--topology", default=None, help="file or shipped name (dual, single)")
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--config")
    r.add_argument("--report")
    r.add_argument("--format", default="json", help="report format: json or text")
    r.add_argument("--trace")
    r.set_defaults(fn=_run)

    con = sub.add_parser("console", help="type utterances at the simulated robot")
    con.add_argument("--topology", default="dual")
    con.add_argument("--seed", type=int, default=0)
    con.add_argument("--config")
    con.set_defaults(fn=_console)

    be = sub.add_parser("backend", help="form backend").add_subparsers(dest="action", required=True)
    s = be.add_parser("serve", help="serve the form service over TCP")
    s.add_argument("--log", required=True)
    s.add_argument("--listen", default="127.0.0.1:8765")
    s.set_defaults(fn=_backend_serve)

    fab = sub.add_parser("fabric", help="message fabric").add_subparsers(dest="action", required=True)
    f = fab.add_parser("run", help="run a scenario and write the NDJSON trace")
    f.add_argument("--topology", default=None)
    f.add_argument("--scenario", default="reference")
    f.add_argument("--seed", type=int, default=None)
    f.add_argument("--config")
    f.add_argument("--trace", required=True)
    f.set_defaults(fn=_fabric_run)
    return p


def main(argv: list[str] | None = None) -> int:
    from .fabric import FabricError
    from .harness.report import UsageError
    from .harness.scenario import ScenarioError

    parser = build_parser()
    a = parser.parse_args(argv)
    try:
        return a.fn(a)
    except UsageError as exc:
        parser.error(str(exc))
    except (ScenarioError, FabricError, FileNotFoundError) as exc:
        print(f"duobot: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
