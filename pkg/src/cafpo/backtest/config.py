"""Run configuration, rolling windows and config hashing."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import yaml

from ..agents import ALGORITHMS, AgentConfig
from ..attribution import AttributionConfig
from ..data import SyntheticSpec
from ..environment import REWARD_TAGS
from ..errors import ConfigError, DataError
from ..factors import CAConfig

METHODS = ("CAFPO", "FFPO", "vanilla-DRL", "equal", "value", "markowitz-hist", "markowitz-factor")
LEARNING_METHODS = ("CAFPO", "FFPO", "vanilla-DRL")


@dataclass(frozen=True)
class Window:
    index: int
    train_first: int
    train_last: int
    test_first: int
    test_last: int

    @property
    def decisions(self) -> range:
        """Test decision periods: each earns the next period's return."""
        return range(self.test_first - 1, self.test_last)


@dataclass
class RollingWindowSpec:
    train: int = 120
    test: int = 12
    step: int = 12
    # tail of the first training span held out for hyperparameter selection
    validation: int = 0
    first_test: str | None = None
    n_windows: int | None = None

    def validate(self) -> None:
        if min(self.train, self.test, self.step) < 1:
            raise ConfigError("train, test and step lengths must be positive")
        if self.validation < 0 or self.validation >= self.train:
            raise ConfigError("validation span must lie in [0, train)")
        if self.n_windows is not None and self.n_windows < 1:
            raise ConfigError("n_windows must be positive")

    def windows(self, dates: tuple[str, ...], earliest_train: int = 0) -> list[Window]:
        """Windows over a date axis; training spans never start before ``earliest_train``."""
        self.validate()
        T = len(dates)
        if self.first_test is not None:
            if self.first_test not in dates:
                raise DataError(f"first test date {self.first_test} is outside the data ({dates[0]}..{dates[-1]})")
            start = dates.index(self.first_test)
        else:
            start = earliest_train + self.train
        if start - self.train < earliest_train:
            raise DataError(f"first test date {dates[start]} leaves less than {self.train} training periods")
        out = []
        while start + self.test <= T and (self.n_windows is None or len(out) < self.n_windows):
            out.append(Window(len(out), start - self.train, start - 1, start, start + self.test - 1))
            start += self.step
        if not out:
            need = earliest_train + self.train + self.test
            raise DataError(f"data has {T} periods; one window needs {need} ({self.train} train + {self.test} test"
                            f" after {earliest_train} warm-up periods)")
        if self.n_windows is not None and len(out) < self.n_windows:
            raise DataError(f"requested {self.n_windows} windows but the data supports only {len(out)}")
        return out


@dataclass
class DataConfig:
    synthetic: SyntheticSpec | None = None
    returns: str | None = None
    characteristics: str | None = None
    caps: str | None = None
    observable_factors: str | None = None
    # characteristic name -> monthly | quarterly | annual; unlisted names use the default
    frequencies: dict[str, str] = field(default_factory=dict)
    default_frequency: str = "monthly"

    def validate(self) -> None:
        if self.synthetic is None and (self.returns is None or self.characteristics is None):
            raise ConfigError("data needs either a synthetic spec or returns and characteristics files")


@dataclass
class RunConfig:
    method: str = "CAFPO"
    algorithm: str = "PPO"
    reward: str = "log"
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    data: DataConfig = field(default_factory=DataConfig)
    windows: RollingWindowSpec = field(default_factory=RollingWindowSpec)
    factors: CAConfig = field(default_factory=CAConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    # PPO updates or DDPG episodes per seed and window
    iterations: int = 50
    eta: float = 0.05
    warmup: int = 12
    universe_size: int | None = None
    markowitz_window: int = 120
    side_rule: str | None = None
    attribution: AttributionConfig = field(default_factory=AttributionConfig)
    grid: dict[str, list] = field(default_factory=dict)

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if self.reward not in REWARD_TAGS:
            raise ConfigError(f"unknown reward {self.reward!r}; expected one of {REWARD_TAGS}")
        if self.method in LEARNING_METHODS and not self.seeds:
            raise ConfigError(f"method {self.method} needs at least one seed")
        if self.iterations < 1 or self.warmup < 0 or self.markowitz_window < 2:
            raise ConfigError("iterations, warmup and markowitz_window must be positive")
        if self.side_rule not in (None, "momentum"):
            raise ConfigError(f"unknown side rule {self.side_rule!r}; expected null or 'momentum'")
        if self.method == "markowitz-factor" and self.data.synthetic is None and not self.data.observable_factors:
            raise ConfigError("markowitz-factor needs an observable factor file")
        if self.method == "FFPO" and self.data.synthetic is None and not self.data.observable_factors:
            raise ConfigError("FFPO needs an observable factor file")
        for key in self.grid:
            if key not in {f.name for f in dataclasses.fields(AgentConfig)} | {"iterations"}:
                raise ConfigError(f"grid key {key!r} is not an agent hyperparameter")
        self.data.validate()
        self.windows.validate()
        self.agent.validate()
        self.attribution.validate()

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        return config_hash(self.to_dict())


def config_hash(obj: Any) -> str:
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()


def _build(cls, raw: Any, where: str):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(raw).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(fields))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    kwargs = {}
    for name, value in raw.items():
        sub = _NESTED.get((cls, name))
        kwargs[name] = _build(sub, value, f"{where}.{name}") if sub is not None and value is not None else value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


_NESTED = {
    (RunConfig, "data"): DataConfig,
    (RunConfig, "windows"): RollingWindowSpec,
    (RunConfig, "factors"): CAConfig,
    (RunConfig, "agent"): AgentConfig,
    (RunConfig, "attribution"): AttributionConfig,
    (DataConfig, "synthetic"): SyntheticSpec,
}


def run_config_from_dict(raw: dict, base_dir: str | Path | None = None) -> RunConfig:
    cfg = _build(RunConfig, raw, "config")
    if base_dir is not None:
        for attr in ("returns", "characteristics", "caps", "observable_factors"):
            p = getattr(cfg.data, attr)
            if p is not None and not Path(p).is_absolute():
                setattr(cfg.data, attr, str(Path(base_dir) / p))
    if cfg.data.synthetic is not None:
        try:
            cfg.data.synthetic.validate()
        except ConfigError as exc:
            raise ConfigError(f"config.data.synthetic: {exc}") from None
    cfg.validate()
    return cfg


def read_config_file(path: str | Path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"{path}: cannot parse config: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return raw


def load_run_config(path: str | Path) -> RunConfig:
    return run_config_from_dict(read_config_file(path), Path(path).parent)
