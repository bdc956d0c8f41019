"""Experiment configuration: TOML loading, defaults, strict validation.

A bare config containing only `kind = "..."` runs that experiment with the
canonical defaults (750+750 samples and 30 repetitions for the two-task
simulations, 100+100 for the angle sweep, the published forest
hyperparameters, and so on). Unknown keys anywhere are rejected before any
work starts.
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field, fields

from .forest import ForestConfig
from .learner import StrategyConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "config_from_dict",
    "EXPERIMENT_KINDS",
    "default_params",
]


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


@dataclass(frozen=True)
class XorXnorParams:
    n_task1: int = 750
    n_task2: int = 750
    n_test: int = 1000
    reps: int = 30
    variance: float = 0.25**2
    checkpoints1: list[int] = field(default_factory=lambda: [50, 100, 200, 350, 500, 750])
    checkpoints2: list[int] = field(default_factory=lambda: [50, 100, 200, 350, 500, 750])
    baseline: bool = True


@dataclass(frozen=True)
class RxorSweepParams:
    angles: list[float] = field(default_factory=lambda: [float(a) for a in range(0, 91, 5)])
    n_task1: int = 100
    n_task2: int = 100
    n_test: int = 1000
    reps: int = 30
    variance: float = 0.25**2
    baseline: bool = False


@dataclass(frozen=True)
class RxorSampleSweepParams:
    angle: float = 25.0
    n_task1: int = 50
    n2_grid: list[int] = field(default_factory=lambda: [50, 200, 800, 3200])
    n_test: int = 1000
    reps: int = 40
    variance: float = 0.25**2


@dataclass(frozen=True)
class SpiralsParams:
    n_task1: int = 750
    n_task2: int = 750
    n_test: int = 1000
    reps: int = 30
    classes1: int = 3
    classes2: int = 5
    turns1: float = 2.5
    turns2: float = 3.5
    angle_variance1: float = 3.0
    angle_variance2: float = 1.876
    checkpoints1: list[int] = field(default_factory=lambda: [250, 500, 750])
    checkpoints2: list[int] = field(default_factory=lambda: [250, 500, 750])
    baseline: bool = True


@dataclass(frozen=True)
class LabelShuffleParams:
    n_task1: int = 500
    n_task2: int = 500
    n_test: int = 1000
    reps: int = 30
    variance: float = 0.25**2


@dataclass(frozen=True)
class RotationSweepParams:
    angles: list[float] = field(default_factory=lambda: [float(a) for a in range(0, 91, 15)])
    n: int = 500  # split into two equal tasks
    n_test: int = 1000
    reps: int = 30
    variance: float = 0.25**2


@dataclass(frozen=True)
class RecruitmentParams:
    n_tasks: int = 10
    n_per_task: int = 500
    n_test: int = 1000
    reps: int = 20
    variance: float = 0.25**2


@dataclass(frozen=True)
class ScalingParams:
    per_task: int = 500
    grid: list[int] = field(default_factory=lambda: [500, 1000, 2000, 4000, 8000])
    reps: int = 1
    variance: float = 0.25**2


@dataclass(frozen=True)
class CustomCsvParams:
    path: str = ""
    test_fraction: float = 0.3
    resample_fraction: float = 0.9
    reps: int = 10


_PARAM_TYPES = {
    "xor_xnor": XorXnorParams,
    "rxor_sweep": RxorSweepParams,
    "rxor_sample_sweep": RxorSampleSweepParams,
    "spirals": SpiralsParams,
    "label_shuffle": LabelShuffleParams,
    "rotation_sweep": RotationSweepParams,
    "recruitment": RecruitmentParams,
    "scaling": ScalingParams,
    "custom_csv": CustomCsvParams,
}
EXPERIMENT_KINDS = tuple(_PARAM_TYPES)


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    seed: int = 0
    out: str | None = None
    threads: int = 1
    # raw honest leaf frequencies reproduce the published transfer magnitudes;
    # the voter functions themselves default to Laplace smoothing when called
    # directly (see voters module)
    smoothing: float = 0.0
    forest: ForestConfig = field(default_factory=ForestConfig)
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    params: object = None

    def with_overrides(self, seed=None, out=None, reps=None, threads=None) -> "ExperimentConfig":
        cfg = self
        if seed is not None:
            cfg = dataclasses.replace(cfg, seed=int(seed))
        if out is not None:
            cfg = dataclasses.replace(cfg, out=out)
        if threads is not None:
            cfg = dataclasses.replace(cfg, threads=int(threads))
        if reps is not None:
            cfg = dataclasses.replace(cfg, params=dataclasses.replace(cfg.params, reps=int(reps)))
        return cfg


def _build_dataclass(cls, values: dict, where: str):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {', '.join(unknown)}")
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where}: {exc}") from None


def default_params(kind: str):
    if kind not in _PARAM_TYPES:
        raise ConfigError(f"unknown experiment kind {kind!r}; expected one of {EXPERIMENT_KINDS}")
    return _PARAM_TYPES[kind]()


def config_from_dict(raw: dict, source: str = "<dict>") -> ExperimentConfig:
    raw = dict(raw)
    kind = raw.pop("kind", None)
    if kind is None:
        raise ConfigError(f"{source}: missing required key 'kind'")
    if kind not in _PARAM_TYPES:
        raise ConfigError(
            f"{source}: unknown experiment kind {kind!r}; expected one of {EXPERIMENT_KINDS}"
        )

    forest = _build_dataclass(ForestConfig, raw.pop("forest", {}), f"{source} [forest]")
    strategy = _build_dataclass(StrategyConfig, raw.pop("strategy", {}), f"{source} [strategy]")
    params = _build_dataclass(_PARAM_TYPES[kind], raw.pop("params", {}), f"{source} [params]")

    top = {"seed": 0, "out": None, "threads": 1, "smoothing": 0.0, "reps": None}
    unknown = sorted(set(raw) - set(top))
    if unknown:
        raise ConfigError(f"{source}: unknown keys: {', '.join(unknown)}")
    top.update(raw)
    reps = top.pop("reps")

    if kind == "custom_csv" and not params.path:
        raise ConfigError(f"{source}: custom_csv needs params.path")
    if top["threads"] < 1:
        raise ConfigError(f"{source}: threads must be >= 1")

    cfg = ExperimentConfig(kind=kind, forest=forest, strategy=strategy, params=params, **top)
    if reps is not None:
        cfg = cfg.with_overrides(reps=reps)
    return cfg


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: TOML parse error: {exc}") from None
    return config_from_dict(raw, source=path)
