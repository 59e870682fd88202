"""JSON run configuration shared by every CLI command.

Top-level keys are the TrainConfig fields plus the sections below. Unknown
keys are rejected at every level; relative paths resolve against the
directory holding the config file.

    {
      "gamma": 1.0, "epochs": 300, ...,               # TrainConfig fields
      "dataset": {"generator": "two_moons", "params": {"n": 400, "noise": 0.1}}
                 or {"csv": "data/train.csv"},
      "eval": {"protocol": "kfold", "folds": 5, "test_fraction": 0.25,
               "split_seed": 0, "distance": "learned_bregman", "direction": "query_first"},
      "outputs": {"model": "model.bmdl", "history": "history.jsonl", ...},
      "matching": {MatchingConfig fields},
      "sweep": {"axis": "gamma", "values": [0.0, 1.0], "parallel": false},
      "gradcheck": {"seed": 0, "sizes": {"n": 6, "d": 8, "m": 5}, "corrupt": null}
    }
"""

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .datasets import load_csv, make_blobs, make_two_moons
from .errors import ConfigError
from .evaluate import DIRECTIONS, DISTANCES
from .matching import MatchingConfig
from .trainer import TrainConfig

GENERATORS = {"two_moons": make_two_moons, "blobs": make_blobs}
SWEEP_AXES = ("gamma", "m")
PROTOCOLS = ("holdout", "kfold")

DEFAULT_OUTPUTS = {
    "model": "model.bmdl",
    "history": "history.jsonl",
    "report": "report.json",
    "comparison_json": "comparison.json",
    "comparison_csv": "comparison.csv",
    "sweep": "sweep.csv",
}


@dataclass
class DatasetSpec:
    generator: str = "two_moons"
    params: dict = field(default_factory=dict)
    csv: Path = None

    def load(self):
        if self.csv is not None:
            return load_csv(self.csv)
        try:
            return GENERATORS[self.generator](**self.params)
        except TypeError as exc:
            raise ConfigError(f"dataset params: {exc}") from None


@dataclass
class EvalSpec:
    protocol: str = "kfold"
    folds: int = 5
    test_fraction: float = 0.25
    split_seed: int = 0
    distance: str = "learned_bregman"
    direction: str = "query_first"

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"eval.protocol must be one of {PROTOCOLS}")
        if self.distance not in DISTANCES:
            raise ConfigError(f"eval.distance must be one of {DISTANCES}")
        if self.direction not in DIRECTIONS:
            raise ConfigError(f"eval.direction must be one of {DIRECTIONS}")
        if self.folds < 2:
            raise ConfigError("eval.folds must be >= 2")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError("eval.test_fraction must lie in (0, 1)")


@dataclass
class SweepSpec:
    axis: str = "gamma"
    values: list = field(default_factory=list)
    parallel: bool = False

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}, got '{self.axis}'")
        self.values = [float(v) if self.axis == "gamma" else int(v) for v in self.values]


@dataclass
class GradcheckSpec:
    seed: int = 0
    sizes: dict = field(default_factory=lambda: {"n": 6, "d": 8, "m": 5})
    corrupt: str = None


@dataclass
class RunConfig:
    path: Path
    train: TrainConfig
    dataset: DatasetSpec
    eval: EvalSpec
    outputs: dict
    matching: MatchingConfig
    sweep: SweepSpec
    gradcheck: GradcheckSpec

    def output(self, key):
        return self.outputs[key]


def _build(cls, data, section):
    if not isinstance(data, dict):
        raise ConfigError(f"'{section}' must be a JSON object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in '{section}': {unknown}")
    try:
        return cls(**data)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"'{section}': {exc}") from None


def parse_config(data, base_dir="."):
    """Build a RunConfig from an already-decoded JSON object."""
    base_dir = Path(base_dir)
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    sections = {"dataset", "eval", "outputs", "matching", "sweep", "gradcheck"}
    train_keys = {f.name for f in fields(TrainConfig)}
    unknown = sorted(set(data) - sections - train_keys)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {unknown}")

    train = _build(TrainConfig, {k: v for k, v in data.items() if k in train_keys}, "top level")

    ds = dict(data.get("dataset", {}))
    if "csv" in ds:
        if set(ds) - {"csv"}:
            raise ConfigError("a csv dataset takes no other keys")
        ds["csv"] = base_dir / ds["csv"]
    dataset = _build(DatasetSpec, ds, "dataset")
    if dataset.csv is None and dataset.generator not in GENERATORS:
        raise ConfigError(f"dataset.generator must be one of {sorted(GENERATORS)}")

    outputs_raw = data.get("outputs", {})
    if not isinstance(outputs_raw, dict):
        raise ConfigError("'outputs' must be a JSON object")
    unknown = sorted(set(outputs_raw) - set(DEFAULT_OUTPUTS))
    if unknown:
        raise ConfigError(f"unknown key(s) in 'outputs': {unknown}")
    outputs = {k: (base_dir / v).resolve() for k, v in {**DEFAULT_OUTPUTS, **outputs_raw}.items()}

    return RunConfig(
        path=base_dir,
        train=train,
        dataset=dataset,
        eval=_build(EvalSpec, data.get("eval", {}), "eval"),
        outputs=outputs,
        matching=_build(MatchingConfig, data.get("matching", {}), "matching"),
        sweep=_build(SweepSpec, data.get("sweep", {}), "sweep"),
        gradcheck=_build(GradcheckSpec, data.get("gradcheck", {}), "gradcheck"),
    )


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return parse_config(data, path.resolve().parent)

