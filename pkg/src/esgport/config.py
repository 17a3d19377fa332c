"""Run configuration for the command-line front end.

A run is fully described by one RunConfig: input paths, the lambda and
alpha grids, optimizer settings, backtest accounting parameters, and the
seed. Values resolve in three layers (built-in defaults, then a JSON
config file, then explicit overrides), and the resolved config is echoed
into every artifact directory so a run can be reproduced from its output
alone.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os

from .errors import DomainError, ParseError

DEFAULT_ALPHA_GRID = tuple(round(0.01 * k, 2) for k in range(100))
DEFAULT_LAMBDAS = (0.0, 0.25, 0.5, 0.75)


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Resolved settings for one command invocation.

    ``horizon`` = 0 means the backtest runs to the end of the sample;
    ``ticker`` empty means option pricing covers every ticker; ``rate``
    is the constant riskless used by the standalone report command.
    """

    prices_path: str = "data/synthetic/prices.csv"
    esg_path: str = "data/synthetic/esg.csv"
    yields_path: str = "data/synthetic/yields.csv"
    lambdas: tuple = DEFAULT_LAMBDAS
    alpha_grid: tuple = DEFAULT_ALPHA_GRID
    alpha: float = 0.5
    risk_measure: str = "mcvar"
    beta: float = 0.99
    window: int = 510
    n_scenarios: int = 10000
    gamma: float = 0.004
    cost_bps: float = 2.0
    refit_interval: int = 21
    horizon: int = 0
    ticker: str = ""
    rate: float = 0.0
    input_path: str = ""
    seed: int = 1234
    out_dir: str = "out"

    def __post_init__(self):
        for name in ("prices_path", "esg_path", "yields_path", "out_dir"):
            value = getattr(self, name)
            if not isinstance(value, str) or not value:
                raise DomainError(f"{name} must be a non-empty string, got {value!r}")
        lambdas = tuple(float(v) for v in self.lambdas)
        object.__setattr__(self, "lambdas", lambdas)
        if not lambdas:
            raise DomainError("lambdas must be non-empty")
        if any(not 0.0 <= lam <= 1.0 for lam in lambdas):
            raise DomainError(f"every lambda must lie in [0, 1], got {lambdas}")
        if len(set(lambdas)) != len(lambdas):
            raise DomainError(f"lambdas must be distinct, got {lambdas}")
        grid = tuple(float(a) for a in self.alpha_grid)
        object.__setattr__(self, "alpha_grid", grid)
        if not grid:
            raise DomainError("alpha_grid must be non-empty")
        if any(not 0.0 <= a <= 1.0 for a in grid):
            raise DomainError("every alpha_grid value must lie in [0, 1]")
        for name in ("alpha", "beta", "gamma", "cost_bps", "rate"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise DomainError(f"{name} must be a number, got {value!r}")
            object.__setattr__(self, name, float(value))
        if not 0.0 <= self.alpha <= 1.0:
            raise DomainError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.risk_measure not in ("mv", "mcvar"):
            raise DomainError(f"risk_measure must be 'mv' or 'mcvar', got {self.risk_measure!r}")
        if not 0.0 < self.beta < 1.0:
            raise DomainError(f"beta must lie in (0, 1), got {self.beta}")
        for name, floor in (("window", 2), ("n_scenarios", 1), ("refit_interval", 1)):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < floor:
                raise DomainError(f"{name} must be an integer >= {floor}, got {value!r}")
        if not isinstance(self.horizon, int) or isinstance(self.horizon, bool) or self.horizon < 0:
            raise DomainError(f"horizon must be a non-negative integer, got {self.horizon!r}")
        if math.isnan(self.gamma) or self.gamma < 0.0:
            raise DomainError(f"gamma must be >= 0 (inf allowed), got {self.gamma!r}")
        if not (math.isfinite(self.cost_bps) and self.cost_bps >= 0.0):
            raise DomainError(f"cost_bps must be a finite number >= 0, got {self.cost_bps!r}")
        if not math.isfinite(self.rate):
            raise DomainError(f"rate must be finite, got {self.rate!r}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise DomainError(f"seed must be a non-negative integer, got {self.seed!r}")
        if not isinstance(self.ticker, str) or not isinstance(self.input_path, str):
            raise DomainError("ticker and input_path must be strings")


_FIELD_NAMES = tuple(f.name for f in dataclasses.fields(RunConfig))

_TUPLE_FIELDS = ("lambdas", "alpha_grid")


def _coerce(name: str, value):
    if name in _TUPLE_FIELDS:
        if not isinstance(value, (list, tuple)):
            raise DomainError(f"{name} must be a list, got {value!r}")
        return tuple(value)
    return value


def load_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Merge defaults, an optional JSON file, and explicit overrides.

    Unknown keys are rejected rather than ignored so a typo in a config
    file cannot silently fall back to a default.
    """
    merged: dict = {}
    if path is not None:
        if not os.path.exists(path):
            raise ParseError(f"config file not found: {path}")
        try:
            with open(path, encoding="utf-8") as handle:
                loaded = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ParseError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ParseError(f"config file {path} must hold a JSON object")
        merged.update(loaded)
    if overrides:
        merged.update({k: v for k, v in overrides.items() if v is not None})
    unknown = sorted(set(merged) - set(_FIELD_NAMES))
    if unknown:
        raise ParseError(f"unknown config keys: {', '.join(unknown)}")
    kwargs = {name: _coerce(name, value) for name, value in merged.items()}
    return RunConfig(**kwargs)


def config_to_json(config: RunConfig) -> str:
    """Stable JSON echo of a resolved config (sorted keys, no volatile fields)."""
    payload = dataclasses.asdict(config)
    payload["lambdas"] = list(payload["lambdas"])
    payload["alpha_grid"] = list(payload["alpha_grid"])
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"
