"""Experiment configuration: defaults, flat config files, overrides.

Precedence, lowest to highest: built-in default, config-file value,
SPIKECL_DATA_DIR environment variable (data_dir only), command-line
flag.  Config files are plain text, one ``key = value`` per line with
``#`` comments.
"""

import os
from dataclasses import dataclass, fields

BENCHMARKS = ("split-mnist", "permuted-mnist", "split-fashionmnist", "synthetic")
METHODS = ("none", "isi-cv", "ewc", "si")

DATA_DIR_ENV = "SPIKECL_DATA_DIR"


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    benchmark: str = "synthetic"
    method: str = "none"
    lam: float = None            # None = method default
    seeds: tuple = (0,)
    hidden_size: int = 128
    timesteps: int = 10
    epochs: int = 5
    batch_size: int = 128
    lr: float = 1e-3
    train_cap: int = None        # per-task sample caps; None = full data
    test_cap: int = None
    num_tasks: int = 5           # permuted-mnist and synthetic only
    data_dir: str = "data"
    out_dir: str = "results"
    importance_samples: int = 1024
    gain: float = 1.0
    synthetic_dim: int = 64
    synthetic_noise: float = 0.05
    synthetic_train: int = 200   # per class
    synthetic_test: int = 50     # per class

    def __post_init__(self):
        if self.benchmark not in BENCHMARKS:
            raise ConfigError(
                f"unknown benchmark {self.benchmark!r}, expected one of {BENCHMARKS}"
            )
        if self.method not in METHODS:
            raise ConfigError(
                f"unknown method {self.method!r}, expected one of {METHODS}"
            )
        if self.lam is not None and self.lam < 0:
            raise ConfigError("lambda must be >= 0")
        if not self.seeds:
            raise ConfigError("need at least one seed")
        for name in ("hidden_size", "epochs", "batch_size", "num_tasks",
                     "importance_samples", "synthetic_dim",
                     "synthetic_train", "synthetic_test"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.timesteps < 2:
            raise ConfigError("timesteps must be >= 2")
        for name in ("lr", "gain"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        for name in ("train_cap", "test_cap"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ConfigError(f"{name} must be >= 1 or unset")
        if not 0.0 <= self.synthetic_noise <= 1.0:
            raise ConfigError("synthetic_noise is a probability")

    def to_dict(self):
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out


# how each config key is parsed from text
def _parse_int(s):
    return int(s)


def _parse_float(s):
    return float(s)


def _parse_str(s):
    return s


def _parse_optional_int(s):
    return None if s.lower() in ("none", "null", "") else int(s)


def _parse_optional_float(s):
    return None if s.lower() in ("none", "null", "") else float(s)


def _parse_seeds(s):
    try:
        return tuple(int(part) for part in s.split(",") if part.strip())
    except ValueError:
        raise ConfigError(f"seeds must be comma-separated integers, got {s!r}")


_PARSERS = {
    "benchmark": _parse_str,
    "method": _parse_str,
    "lam": _parse_optional_float,
    "seeds": _parse_seeds,
    "hidden_size": _parse_int,
    "timesteps": _parse_int,
    "epochs": _parse_int,
    "batch_size": _parse_int,
    "lr": _parse_float,
    "train_cap": _parse_optional_int,
    "test_cap": _parse_optional_int,
    "num_tasks": _parse_int,
    "data_dir": _parse_str,
    "out_dir": _parse_str,
    "importance_samples": _parse_int,
    "gain": _parse_float,
    "synthetic_dim": _parse_int,
    "synthetic_noise": _parse_float,
    "synthetic_train": _parse_int,
    "synthetic_test": _parse_int,
}

# accepted aliases, mostly so config files can say "lambda"
_ALIASES = {"lambda": "lam"}


def parse_config_text(text, source="<config>"):
    """Parse ``key = value`` lines into a raw string dict."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in stripped.split("=", 1))
        key = _ALIASES.get(key, key)
        if key not in _PARSERS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        raw[key] = value
    return raw


def load_config(path=None, overrides=None, env=None):
    """Build an ExperimentConfig with full precedence applied.

    ``overrides`` maps field names to already-typed values (None entries
    are ignored); ``env`` defaults to os.environ.
    """
    env = os.environ if env is None else env
    values = {}
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"no such config file: {path}")
        with open(path, encoding="utf-8") as f:
            raw = parse_config_text(f.read(), source=path)
        for key, text in raw.items():
            try:
                values[key] = _PARSERS[key](text)
            except ConfigError:
                raise
            except ValueError:
                raise ConfigError(f"{path}: bad value for {key}: {text!r}")
    if DATA_DIR_ENV in env:
        values["data_dir"] = env[DATA_DIR_ENV]
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _PARSERS:
            raise ConfigError(f"unknown config field {key!r}")
        values[key] = value
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc))
