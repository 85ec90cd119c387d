"""Experiment configuration (a single JSON document).

Every key is optional; defaults give the standard protocol
(alpha=10, beta=1, thr=0.5, Pos=5, Pen=-10, 80/20 split, 40,000 episodes,
five seeds) on the bundled synthetic dataset::

    {
      "data": {"csv": "adult.csv", "schema": "adult.schema.json"},
      "split": {"ratio": 0.8, "seed": 0},
      "classifier": {"epochs": 30, "lr": 0.005, "batch_size": 64, "hidden": [64, 64], "seed": 0},
      "agent": {"gamma": 0.99, "batch_size": 64, "warmup": 500, ...},
      "reward": {"alpha": 10, "beta": 1, "thr": 0.5, "pos": 5, "pen": -10},
      "episodes": 40000,
      "seeds": [0, 1, 2, 3, 4],
      "variants": ["bin", "prob"],
      "out": "runs",
      "workers": 1
    }

Leave out ``data`` (or give ``data.synthetic``) to use generated data.
Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from .agent import AgentConfig
from .classifier import ClassifierConfig
from .env import RewardConfig


@dataclass
class SyntheticSpec:
    n: int = 250
    k_cont: int = 3
    k_disc: int = 1
    k_immut: int = 1
    seed: int = 0


@dataclass
class DataConfig:
    csv: Optional[str] = None
    schema: Optional[str] = None
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)

    @property
    def uses_csv(self) -> bool:
        return self.csv is not None


@dataclass
class SplitConfig:
    ratio: float = 0.8
    seed: int = 0


@dataclass
class RewardParams:
    alpha: float = 10.0
    beta: float = 1.0
    thr: float = 0.5
    pos: Optional[float] = None
    pen: Optional[float] = None

    def for_variant(self, variant: str) -> RewardConfig:
        return RewardConfig(variant, self.alpha, self.beta, self.thr, self.pos, self.pen)


@dataclass
class ClassifierSection(ClassifierConfig):
    seed: int = 0

    def train_config(self) -> ClassifierConfig:
        return ClassifierConfig(tuple(self.hidden), self.epochs, self.lr, self.batch_size, self.threshold)


@dataclass
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    classifier: ClassifierSection = field(default_factory=ClassifierSection)
    agent: AgentConfig = field(default_factory=AgentConfig)
    reward: RewardParams = field(default_factory=RewardParams)
    episodes: int = 40_000
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    variants: list = field(default_factory=lambda: ["bin", "prob"])
    out: str = "runs"
    workers: int = 1

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("seed list must be non-empty")
        if self.episodes < 0:
            raise ValueError("episodes must be >= 0")
        for v in self.variants:
            if v not in ("bin", "prob"):
                raise ValueError(f"unknown reward variant {v!r}")
        if not 0 < self.split.ratio < 1:
            raise ValueError("split ratio must lie in (0, 1)")
        if self.data.uses_csv and self.data.schema is None:
            raise ValueError("data.csv requires data.schema")
        # validates alpha/beta/pos/pen eagerly
        self.reward.for_variant("bin")

    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


_SECTIONS = {
    "data": DataConfig,
    "split": SplitConfig,
    "classifier": ClassifierSection,
    "agent": AgentConfig,
    "reward": RewardParams,
}


def _build(cls, obj, where: str):
    if not isinstance(obj, dict):
        raise ValueError(f"{where}: expected an object")
    known = {f.name for f in fields(cls)}
    unknown = set(obj) - known
    if unknown:
        raise ValueError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = dict(obj)
    if cls is DataConfig and "synthetic" in kwargs:
        kwargs["synthetic"] = _build(SyntheticSpec, kwargs["synthetic"], f"{where}.synthetic")
    if "hidden" in kwargs:
        kwargs["hidden"] = tuple(kwargs["hidden"])
    return cls(**kwargs)


def config_from_dict(obj: dict, base_dir: Optional[Path] = None) -> ExperimentConfig:
    if not isinstance(obj, dict):
        raise ValueError("config must be a JSON object")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(obj) - known
    if unknown:
        raise ValueError(f"unknown config keys {sorted(unknown)}")
    kwargs = {}
    for key, value in obj.items():
        kwargs[key] = _build(_SECTIONS[key], value, key) if key in _SECTIONS else value
    if base_dir is not None:
        data = kwargs.get("data")
        if data is not None:
            for attr in ("csv", "schema"):
                p = getattr(data, attr)
                if p is not None and not Path(p).is_absolute():
                    setattr(data, attr, str(base_dir / p))
        if "out" in kwargs and not Path(kwargs["out"]).is_absolute():
            kwargs["out"] = str(base_dir / kwargs["out"])
    if "seeds" in kwargs:
        kwargs["seeds"] = [int(s) for s in kwargs["seeds"]]
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return config_from_dict(json.loads(path.read_text(encoding="utf-8")), base_dir=path.parent)
