"""Experiment configuration: flat `key = value` files, strictly validated.

Lines are `key = value` pairs; `#` starts a comment; lists are
comma-separated. Unknown keys are rejected, malformed values are reported
with the offending line number and key.
"""

from __future__ import annotations

from dataclasses import dataclass, field

EXPERIMENTS = (
    "convergence",
    "interval-length",
    "perturb-random",
    "perturb-mode",
    "infsup",
    "stability-oracle",
)
EPSILON_STRATEGIES = ("plain", "data-aware", "explicit")
SOLUTIONS = ("cubic", "decay", "zero")


@dataclass
class ExperimentConfig:
    experiment: str
    d: int
    T: float
    k_range: list
    L: float = None  # interval length; defaults to T
    l: int = 0
    epsilon_strategy: str = "plain"
    epsilon_values: list = None
    solution: str = "zero"
    seed: int = 0
    target_norm: float = 0.01
    mode_n: int = 1
    amplitude: float = 0.05
    slice_times: list = None
    output_path: str = None
    max_iter: int = 5000
    threshold: float = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(
                f"unknown experiment {self.experiment!r}; one of {EXPERIMENTS}"
            )
        if self.d not in (1, 2):
            raise ValueError("d must be 1 or 2")
        if self.T <= 0.0:
            raise ValueError("T must be positive")
        if self.L is None:
            self.L = self.T
        if not 0.0 < self.L <= self.T:
            raise ValueError("L must lie in (0, T]")
        ks = list(self.k_range)
        if not ks or any(int(k) != k for k in ks):
            raise ValueError("k_range must be a nonempty integer list")
        self.k_range = [int(k) for k in ks]
        if any(b <= a for a, b in zip(self.k_range, self.k_range[1:])):
            raise ValueError("k_range must be strictly ascending")
        if min(self.k_range) < 0:
            raise ValueError("k_range entries must be nonnegative")
        if self.l not in (0, 1):
            raise ValueError("l must be 0 or 1")
        if self.epsilon_strategy not in EPSILON_STRATEGIES:
            raise ValueError(
                f"unknown epsilon_strategy {self.epsilon_strategy!r}"
            )
        if self.epsilon_strategy == "explicit":
            if self.epsilon_values is None or len(self.epsilon_values) != len(
                self.k_range
            ):
                raise ValueError(
                    "explicit strategy needs epsilon_values matching k_range"
                )
        if self.solution not in SOLUTIONS:
            raise ValueError(f"unknown solution {self.solution!r}")
        if self.slice_times is None:
            self.slice_times = [
                self.T / 4.0,
                self.T / 2.0,
                3.0 * self.T / 4.0,
                self.T,
            ]
        lo = self.T - self.L
        for t in self.slice_times:
            if t < lo - 1e-12 or t > self.T + 1e-12:
                raise ValueError(
                    f"slice time {t} outside the solved interval [{lo}, {self.T}]"
                )
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if self.threshold is not None and self.threshold <= 0.0:
            raise ValueError("threshold must be positive when given")
        if self.target_norm < 0.0:
            raise ValueError("target_norm must be nonnegative")
        if self.mode_n < 1:
            raise ValueError("mode_n must be >= 1")


class ConfigError(ValueError):
    pass


def _parse_scalar(raw: str, kind, key: str, lineno: int):
    try:
        if kind is int:
            as_float = float(raw)
            if as_float != int(as_float):
                raise ValueError
            return int(as_float)
        if kind is float:
            return float(raw)
    except ValueError:
        raise ConfigError(
            f"line {lineno}: key {key!r} expects {kind.__name__}, got {raw!r}"
        ) from None
    return raw


def _parse_list(raw: str, kind, key: str, lineno: int) -> list:
    items = [part.strip() for part in raw.split(",") if part.strip()]
    if not items:
        raise ConfigError(f"line {lineno}: key {key!r} expects a nonempty list")
    return [_parse_scalar(part, kind, key, lineno) for part in items]


# key -> (target type, is_list)
_SCHEMA = {
    "experiment": (str, False),
    "d": (int, False),
    "T": (float, False),
    "L": (float, False),
    "k_range": (int, True),
    "l": (int, False),
    "epsilon_strategy": (str, False),
    "epsilon_values": (float, True),
    "solution": (str, False),
    "seed": (int, False),
    "target_norm": (float, False),
    "mode_n": (int, False),
    "amplitude": (float, False),
    "slice_times": (float, True),
    "output_path": (str, False),
    "max_iter": (int, False),
    "threshold": (float, False),
}
_REQUIRED = ("experiment", "d", "T", "k_range")


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a configuration document."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in body.split("=", 1))
        if key not in _SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        kind, is_list = _SCHEMA[key]
        values[key] = (
            _parse_list(raw, kind, key, lineno)
            if is_list
            else _parse_scalar(raw, kind, key, lineno)
        )
    missing = [key for key in _REQUIRED if key not in values]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")
    try:
        return ExperimentConfig(**values)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
