"""Recover detector thresholds and contention costs from target bands.

Detector thresholds are chosen by a grid sweep on a labelled corpus; each
algorithm has an FP band, an FN ceiling and a preferred FP. Contention
costs are found by bisection on the reference scenario: the wake-word
frame cost sets the dual-device latency, then the recognizer frame cost
sets the single-device latency. When no grid point satisfies a target the
report says so and lists the Pareto frontier of the points examined.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

from ..fabric import Loop
from ..phonostream import AcousticStream
from ..wakeword.detect import Algorithm
from ..wakeword.evaluate import WakewordModels, candidates, default_models, sweep
from .config import RunConfig
from .runner import prepare, run_scenario
from .scenario import Scenario


@dataclass(frozen=True)
class DetectorTarget:
    algorithm: Algorithm
    fp_min: float
    fp_max: float            # exclusive when fp_min is 0
    fn_max: float            # exclusive
    fp_goal: float           # preferred FP among feasible points

    def accepts(self, fp: float, fn: float) -> bool:
        fp_ok = fp < self.fp_max if self.fp_min == 0 else self.fp_min <= fp <= self.fp_max
        return fp_ok and fn < self.fn_max


DEFAULT_TARGETS = {
    Algorithm.PHONETIC: DetectorTarget(Algorithm.PHONETIC, 0.03, 0.08, 0.05, 0.055),
    Algorithm.HMM: DetectorTarget(Algorithm.HMM, 0.005, 0.03, 0.05, 0.015),
    Algorithm.LM: DetectorTarget(Algorithm.LM, 0.0, 0.001, 0.05, 0.0),
}

# thresholds ordered from loosest to tightest
DEFAULT_GRIDS = {
    Algorithm.PHONETIC: [3.0, 2.0, 1.0, 0.0],
    Algorithm.HMM: [float(x) for x in range(0, 42, 2)],
    Algorithm.LM: [-0.3, -0.2, -0.1, -0.05, 0.0, 0.02, 0.05, 0.1, 0.2],
}


@dataclass(frozen=True)
class SweepPoint:
    threshold: float
    fp: float
    fn: float


def pareto_frontier(points: Sequence[SweepPoint]) -> list[SweepPoint]:
    """Points not dominated in (FP, FN), both minimised; sorted by FP."""
    out = []
    for p in points:
        dominated = any(q.fp <= p.fp and q.fn <= p.fn and (q.fp < p.fp or q.fn < p.fn) for q in points)
        if not dominated:
            out.append(p)
    return sorted(out, key=lambda p: (p.fp, p.fn, p.threshold))


@dataclass
class DetectorCalibration:
    algorithm: str
    target: dict
    chosen: float | None
    feasible: bool
    points: list[SweepPoint]
    frontier: list[SweepPoint] = field(default_factory=list)
    monotone: bool = True


def choose(target: DetectorTarget, points: Sequence[SweepPoint]) -> SweepPoint | None:
    ok = [p for p in points if target.accepts(p.fp, p.fn)]
    if not ok:
        return None
    return min(ok, key=lambda p: (abs(p.fp - target.fp_goal), p.fn, p.threshold))


def calibrate_detectors(corpus: Sequence[AcousticStream], models: WakewordModels | None = None,
                        targets: dict[Algorithm, DetectorTarget] | None = None,
                        grids: dict[Algorithm, Sequence[float]] | None = None,
                        progress: Callable[[str], None] | None = None) -> list[DetectorCalibration]:
    models = models or default_models()
    targets = targets or DEFAULT_TARGETS
    grids = grids or DEFAULT_GRIDS
    out = []
    for alg in Algorithm:
        if progress:
            progress(f"sweeping {alg.value}")
        cands = [candidates(alg, s, models) for s in corpus]
        metrics = sweep(alg, corpus, models, grids[alg], cands)
        points = [SweepPoint(m.threshold, m.false_positive_rate, m.false_negative_rate) for m in metrics]
        fps = [p.fp for p in points]
        best = choose(targets[alg], points)
        out.append(DetectorCalibration(
            alg.value, asdict(targets[alg]) | {"algorithm": alg.value},
            None if best is None else best.threshold, best is not None, points,
            [] if best is not None else pareto_frontier(points),
            all(a >= b for a, b in zip(fps, fps[1:]))))
    return out


# --------------------------------------------------------------------------
# contention


@dataclass
class ContentionCalibration:
    wake_cost: float | None
    lvcsr_cost: float | None
    dual_mean_ms: float | None
    single_mean_ms: float | None
    feasible: bool
    evaluations: list[dict] = field(default_factory=list)


def _with_costs(config: RunConfig, wake: float, lvcsr: float) -> RunConfig:
    fc = dict(config.contention.frame_cost)
    fc[Loop.WAKEWORD] = wake
    fc[Loop.LVCSR] = lvcsr
    return replace(config, contention=replace(config.contention, frame_cost=fc))


def _first_at_least(grid: Sequence[float], f: Callable[[float], float], goal: float) -> int | None:
    """Smallest index with ``f(grid[i]) >= goal`` for nondecreasing ``f``; None if none."""
    lo, hi = 0, len(grid) - 1
    if f(grid[hi]) < goal:
        return None
    while lo < hi:
        mid = (lo + hi) // 2
        if f(grid[mid]) >= goal:
            hi = mid
        else:
            lo = mid + 1
    return lo


def calibrate_contention(scenario: Scenario, config: RunConfig, models: WakewordModels | None = None,
                         dual: str = "dual", single: str = "single",
                         dual_goal: float = 105.0, dual_band: tuple[float, float] = (95.0, 115.0),
                         single_goal: float = 350.0, single_min: float = 300.0,
                         wake_grid: Sequence[float] | None = None,
                         lvcsr_grid: Sequence[float] | None = None,
                         progress: Callable[[str], None] | None = None) -> ContentionCalibration:
    """Bisection over frame-cost grids; mean latency is nondecreasing in both costs."""
    models = models or default_models()
    wake_grid = list(wake_grid or [50.0 * k for k in range(0, 81)])
    lvcsr_grid = list(lvcsr_grid or [250.0 * k for k in range(0, 121)])
    prep = prepare(scenario, config, models)
    evals: list[dict] = []
    cache: dict[tuple[str, float, float], float] = {}

    def mean(topo: str, wake: float, lvcsr: float) -> float:
        key = (topo, wake, lvcsr)
        if key not in cache:
            rep, _ = run_scenario(scenario, topo, _with_costs(config, wake, lvcsr), models=models,
                                  prepared=prep, detectors=False)
            m = rep.wake_latency["mean_ms"] if rep.wake_latency else float("inf")
            cache[key] = m
            evals.append({"topology": topo, "wake_cost": wake, "lvcsr_cost": lvcsr, "mean_ms": m})
            if progress:
                progress(f"{topo} wake={wake:g} lvcsr={lvcsr:g} -> {m:.1f} ms")
        return cache[key]

    base_lvcsr = config.contention.cost(Loop.LVCSR)
    i = _first_at_least(wake_grid, lambda w: mean(dual, w, base_lvcsr), dual_goal)
    if i is None:
        i = len(wake_grid) - 1
    elif i > 0 and abs(mean(dual, wake_grid[i - 1], base_lvcsr) - dual_goal) <= \
            abs(mean(dual, wake_grid[i], base_lvcsr) - dual_goal):
        i -= 1
    wake = wake_grid[i]
    j = _first_at_least(lvcsr_grid, lambda c: mean(single, wake, c), single_goal)
    lvcsr = lvcsr_grid[-1] if j is None else lvcsr_grid[j]
    d = mean(dual, wake, lvcsr)
    s = mean(single, wake, lvcsr)
    ok = dual_band[0] <= d <= dual_band[1] and s > single_min
    return ContentionCalibration(wake, lvcsr, d, s, ok, evals)


# --------------------------------------------------------------------------
# combined


@dataclass
class CalibrationReport:
    detectors: list[DetectorCalibration]
    ordering_ok: bool
    contention: ContentionCalibration | None
    feasible: bool

    def to_dict(self) -> dict:
        return asdict(self)


def calibrate(corpus: Sequence[AcousticStream], config: RunConfig, scenario: Scenario | None = None,
              models: WakewordModels | None = None,
              progress: Callable[[str], None] | None = None) -> tuple[RunConfig, CalibrationReport]:
    """Detector thresholds first, then (given a scenario) contention costs.

    The returned config carries every parameter that was found; the
    others keep their values from ``config``.
    """
    models = models or default_models()
    dets = calibrate_detectors(corpus, models, progress=progress)
    chosen = {Algorithm(d.algorithm): d for d in dets}
    fp_at = {}
    for alg, d in chosen.items():
        for p in d.points:
            if p.threshold == d.chosen:
                fp_at[alg] = p.fp
    ordering = (len(fp_at) == 3 and fp_at[Algorithm.PHONETIC] > fp_at[Algorithm.HMM] > fp_at[Algorithm.LM])
    thresholds = dict(config.wakeword.thresholds)
    for alg, d in chosen.items():
        if d.chosen is not None:
            thresholds[alg] = d.chosen
    config = replace(config, wakeword=replace(config.wakeword, thresholds=thresholds))
    cont = None
    if scenario is not None:
        cont = calibrate_contention(scenario, config, models, progress=progress)
        config = _with_costs(config, cont.wake_cost, cont.lvcsr_cost)
    feasible = all(d.feasible for d in dets) and ordering and (cont is None or cont.feasible)
    return config, CalibrationReport(dets, ordering, cont, feasible)
