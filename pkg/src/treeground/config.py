"""Run configuration: one JSON document driving every CLI command.

Unknown keys are rejected, defaults are merged, and the fully resolved
config is echoed into output artifacts so any run can be reproduced from
what it wrote.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .encoder import EncoderConfig
from .episodes import GenSpec
from .errors import ConfigError
from .interval import EnvConfig
from .rewards import RewardConfig
from .training import TrainConfig

DEFAULT_THRESHOLDS = (0.3, 0.5, 0.7)


@dataclass
class Paths:
    data: str = "episodes.tspe"
    checkpoint: str = "checkpoint.tspc"
    metrics: str = "metrics.jsonl"
    report: str = "report.json"


@dataclass
class RunConfig:
    seed: int
    gen: GenSpec
    env: EnvConfig
    encoder: EncoderConfig
    reward: RewardConfig
    train: TrainConfig
    eval_thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    paths: Paths = field(default_factory=Paths)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "gen": dataclasses.asdict(self.gen),
            "env": dataclasses.asdict(self.env),
            "encoder": dataclasses.asdict(self.encoder),
            "reward": dataclasses.asdict(self.reward),
            "train": dataclasses.asdict(self.train),
            "eval_thresholds": list(self.eval_thresholds),
            "paths": dataclasses.asdict(self.paths),
        }


def _section(raw: dict, name: str, cls):
    body = raw.pop(name, {})
    if not isinstance(body, dict):
        raise ConfigError(f"section {name!r} must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(body) - known
    if unknown:
        raise ConfigError(f"unknown keys in section {name!r}: {sorted(unknown)}")
    return dict(body)


def run_config_from_dict(raw: dict) -> RunConfig:
    """Merge a (possibly partial) config document over the defaults.

    The global seed fills ``gen.seed`` and ``train.seed`` unless those are
    given explicitly; env and encoder geometry defaults follow the data
    generator's dimensions.
    """
    raw = dict(raw)
    seed = raw.pop("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")

    gen_kwargs = _section(raw, "gen", GenSpec)
    gen_kwargs.setdefault("seed", seed)
    try:
        gen = GenSpec(**gen_kwargs)
        env_kwargs = _section(raw, "env", EnvConfig)
        env_kwargs.setdefault("n_clips", gen.n_clips)
        env = EnvConfig(**env_kwargs)
        enc_kwargs = _section(raw, "encoder", EncoderConfig)
        enc_kwargs.setdefault("d_u", gen.d_u)
        enc_kwargs.setdefault("d_E", gen.d_E)
        encoder = EncoderConfig(**enc_kwargs)
        reward = RewardConfig(**_section(raw, "reward", RewardConfig))
        train_kwargs = _section(raw, "train", TrainConfig)
        train_kwargs.setdefault("seed", seed)
        train = TrainConfig(**train_kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc

    thresholds = raw.pop("eval_thresholds", list(DEFAULT_THRESHOLDS))
    if not (
        isinstance(thresholds, (list, tuple))
        and thresholds
        and all(isinstance(x, (int, float)) and 0 <= x < 1 for x in thresholds)
    ):
        raise ConfigError("eval_thresholds must be a non-empty list of values in [0, 1)")
    paths = Paths(**_section(raw, "paths", Paths))
    if raw:
        raise ConfigError(f"unknown top-level keys: {sorted(raw)}")
    return RunConfig(
        seed=seed,
        gen=gen,
        env=env,
        encoder=encoder,
        reward=reward,
        train=train,
        eval_thresholds=tuple(float(x) for x in thresholds),
        paths=paths,
    )


def load_run_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config document must be a JSON object")
    return run_config_from_dict(raw)


def dump_config(cfg: RunConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"
