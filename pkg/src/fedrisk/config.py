"""Run configuration: one JSON file, strict keys, every default written back out."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

from .anomaly import DEFAULT_ALPHA, DEFAULT_ROLLING_WINDOW
from .data import SynthConfig
from .model import ModelConfig
from .risk import RiskConfig
from .training import TrainConfig

SEGMENTS = ("train", "val", "test", "all")


@dataclass
class AnomalyConfig:
    alpha: float = DEFAULT_ALPHA
    mode: str = "global"
    window: int = DEFAULT_ROLLING_WINDOW
    taper: str = "hann"
    allow_any_alpha: bool = False

    def __post_init__(self):
        if self.mode not in ("global", "rolling"):
            raise ValueError("anomaly.mode must be 'global' or 'rolling'")
        if self.taper not in ("hann", "flat"):
            raise ValueError("anomaly.taper must be 'hann' or 'flat'")
        if self.window < 1:
            raise ValueError("anomaly.window must be positive")


@dataclass
class DataConfig:
    csv: str | None = None
    truth: str | None = None
    log_return: bool = False
    log_volume: bool = False
    ratios: tuple[float, ...] = (0.7, 0.15, 0.15)
    stride: int = 1
    segment: str = "test"

    def __post_init__(self):
        self.ratios = tuple(float(r) for r in self.ratios)
        if self.stride < 1:
            raise ValueError("data.stride must be positive")
        if self.segment not in SEGMENTS:
            raise ValueError(f"data.segment must be one of {SEGMENTS}")


SECTIONS = {
    "model": ModelConfig,
    "train": TrainConfig,
    "risk": RiskConfig,
    "anomaly": AnomalyConfig,
    "data": DataConfig,
    "synth": SynthConfig,
}


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    risk: RiskConfig = field(default_factory=RiskConfig)
    anomaly: AnomalyConfig = field(default_factory=AnomalyConfig)
    data: DataConfig = field(default_factory=DataConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    out: str = "runs"

    @property
    def seeds(self) -> tuple[int, ...]:
        return self.train.seeds

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ValueError("config must be a JSON object")
        allowed = set(SECTIONS) | {"out"}
        unknown = sorted(set(raw) - allowed)
        if unknown:
            raise ValueError(f"unknown config key(s): {', '.join(unknown)}")
        kwargs = {}
        for name, section in SECTIONS.items():
            body = raw.get(name, {})
            if not isinstance(body, dict):
                raise ValueError(f"config section {name!r} must be an object")
            known = {f.name for f in fields(section)}
            bad = sorted(set(body) - known)
            if bad:
                raise ValueError(f"unknown key(s) in {name!r}: {', '.join(f'{name}.{b}' for b in bad)}")
            kwargs[name] = section(**body)
        if "out" in raw:
            kwargs["out"] = str(raw["out"])
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | Path | None) -> "RunConfig":
        if path is None:
            return cls()
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json())
        return path


def _plain(obj):
    if is_dataclass(obj):
        obj = asdict(obj)
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj
