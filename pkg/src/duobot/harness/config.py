"""Run configuration: calibrated constants shipped as ``default_config.json``."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

from ..dialog.machine import DialogConfig
from ..fabric import ContentionModel, Loop
from ..motion import MotionConfig
from ..wakeword.detect import Algorithm

CONFIG_FORMAT = "duobot-config"


@dataclass
class WakewordSettings:
    algorithm: Algorithm = Algorithm.LM
    thresholds: dict[Algorithm, float] = field(default_factory=lambda: {
        Algorithm.PHONETIC: 1.0, Algorithm.HMM: 20.0, Algorithm.LM: -0.1})
    noise: float = 0.6

    def to_dict(self) -> dict:
        return {"algorithm": self.algorithm.value, "noise": self.noise,
                "thresholds": {a.value: self.thresholds[a] for a in Algorithm}}

    @classmethod
    def from_dict(cls, d: dict) -> "WakewordSettings":
        return cls(Algorithm(d["algorithm"]), {Algorithm(k): float(v) for k, v in d["thresholds"].items()},
                   float(d["noise"]))


@dataclass
class RunConfig:
    wakeword: WakewordSettings = field(default_factory=WakewordSettings)
    lvcsr_wer: float = 0.06
    contention: ContentionModel = field(default_factory=lambda: ContentionModel({l: 0.0 for l in Loop}))
    motion: MotionConfig = field(default_factory=MotionConfig)
    dialog: DialogConfig = field(default_factory=DialogConfig)
    tracking_window_ms: float = 2000.0
    # budget name -> upper bound (inclusive)
    budgets: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "format": CONFIG_FORMAT, "version": 1,
            "wakeword": self.wakeword.to_dict(),
            "lvcsr": {"wer": self.lvcsr_wer},
            "contention": self.contention.to_dict(),
            "motion": asdict(self.motion),
            "dialog": asdict(self.dialog),
            "tracking_window_ms": self.tracking_window_ms,
            "budgets": dict(self.budgets),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if d.get("format") != CONFIG_FORMAT:
            raise ValueError("not a duobot config file")
        return cls(WakewordSettings.from_dict(d["wakeword"]), float(d["lvcsr"]["wer"]),
                   ContentionModel.from_dict(d["contention"]), MotionConfig(**d["motion"]),
                   DialogConfig(**d["dialog"]), float(d.get("tracking_window_ms", 2000.0)),
                   {k: float(v) for k, v in d.get("budgets", {}).items()})

    @classmethod
    def load(cls, path: str | Path | None = None) -> "RunConfig":
        if path is None:
            text = resources.files("duobot.data").joinpath("default_config.json").read_text()
        else:
            text = Path(path).read_text()
        return cls.from_dict(json.loads(text))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def default_config() -> RunConfig:
    return RunConfig.load()
