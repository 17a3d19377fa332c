"""One-step scenario matrices and multi-step trajectory ensembles.

Simulation is vectorized over scenarios on a single counter-based RNG
stream per call, so results are bit-reproducible for a fixed seed and
independent of how the caller schedules work. Trajectory paths whose
cumulative return magnitude exceeds OVERFLOW_BOUND are redrawn from the
same stream; redraw counts land in the ensemble diagnostics.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .arma_garch import ArmaGarchFit, one_step_conditional
from .errors import DomainError, ShapeError, SimulationError
from .esg_transform import EsgBlendParams, esg_valued_return
from .nig import NigParams

OVERFLOW_BOUND = 50.0
_MAX_REDRAW_ROUNDS = 100


@dataclasses.dataclass(frozen=True, eq=False)
class ScenarioMatrix:
    """S x I one-step-ahead returns, one scenario per row."""

    values: np.ndarray
    seed: int
    kind: str = "raw"
    tickers: tuple = ()

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.ndim != 2 or values.shape[0] < 1:
            raise ShapeError(f"scenario matrix must be 2-d with S >= 1, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DomainError("scenario matrix contains non-finite entries")
        if self.tickers and len(self.tickers) != values.shape[1]:
            raise ShapeError(f"{len(self.tickers)} tickers for {values.shape[1]} columns")

    @property
    def n_scenarios(self) -> int:
        return self.values.shape[0]

    @property
    def n_assets(self) -> int:
        return self.values.shape[1]


@dataclasses.dataclass(frozen=True, eq=False)
class TrajectoryEnsemble:
    """S x T_max return paths and the price paths they imply.

    ``paths`` holds raw per-step returns, ``zeta`` their blended
    counterparts (identical to ``paths`` when no blend was applied), and
    prices[s, t] = spot * exp(zeta[s, :t+1].sum()), so price paths are
    strictly positive by construction. Horizons of interest run from
    ``t_min`` to ``t_max`` (1-based steps ahead).
    """

    paths: np.ndarray
    zeta: np.ndarray
    prices: np.ndarray
    spot: float
    t_min: int
    t_max: int
    seed: int
    diagnostics: dict = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        for name in ("paths", "zeta", "prices"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if not (self.paths.shape == self.zeta.shape == self.prices.shape):
            raise ShapeError("paths, zeta, and prices must share one shape")
        if self.paths.ndim != 2:
            raise ShapeError(f"expected S x T arrays, got shape {self.paths.shape}")
        if not (1 <= self.t_min <= self.t_max == self.paths.shape[1]):
            raise DomainError(
                f"need 1 <= t_min <= t_max == columns, got t_min={self.t_min}, "
                f"t_max={self.t_max}, columns={self.paths.shape[1]}"
            )
        if not np.all(np.isfinite(self.prices)) or not np.all(self.prices > 0.0):
            raise DomainError("price paths must be finite and strictly positive")

    @property
    def n_scenarios(self) -> int:
        return self.paths.shape[0]

    def prices_at(self, horizon: int) -> np.ndarray:
        """Terminal prices ``horizon`` steps ahead (t_min <= horizon <= t_max)."""
        if not self.t_min <= horizon <= self.t_max:
            raise DomainError(f"horizon {horizon} outside [{self.t_min}, {self.t_max}]")
        return self.prices[:, horizon - 1]


def simulate_one_step(fits, joint: NigParams, n_scenarios: int, seed: int) -> ScenarioMatrix:
    """Draw S joint innovation vectors and push each through every asset's
    one-step recursion from its stored state."""
    fits = list(fits)
    if joint.d != len(fits):
        raise ShapeError(f"joint law has dimension {joint.d} for {len(fits)} fits")
    if n_scenarios < 1:
        raise DomainError(f"need at least one scenario, got {n_scenarios}")
    rng = np.random.Generator(np.random.Philox(seed))
    z = joint.sample(n_scenarios, rng)
    values = np.empty_like(z)
    for i, fit in enumerate(fits):
        m, s2 = one_step_conditional(fit)
        values[:, i] = m + math.sqrt(s2) * z[:, i]
    return ScenarioMatrix(values=values, seed=seed)


def _roll_paths(fit: ArmaGarchFit, z: np.ndarray) -> np.ndarray:
    """Iterate the fitted recursion over columns of z, one row per scenario."""
    n, horizon = z.shape
    r_buf = np.tile(fit.recent_returns, (n, 1))
    e_buf = np.tile(fit.recent_residuals, (n, 1))
    sigma2 = np.full(n, fit.last_sigma2)
    out = np.empty((n, horizon))
    for t in range(horizon):
        if fit.garch_active:
            sigma2 = fit.omega + fit.a1 * e_buf[:, -1] ** 2 + fit.b1 * sigma2
            eps = np.sqrt(sigma2) * z[:, t]
        else:
            eps = fit.resid_scale * z[:, t]
        r = np.full(n, fit.mu)
        for j in range(1, fit.p + 1):
            r += fit.phi[j - 1] * (r_buf[:, -j] - fit.mu)
        for k in range(1, fit.q + 1):
            r += fit.theta[k - 1] * e_buf[:, -k]
        r += eps
        out[:, t] = r
        r_buf[:, :-1] = r_buf[:, 1:]
        r_buf[:, -1] = r
        e_buf[:, :-1] = e_buf[:, 1:]
        e_buf[:, -1] = eps
    return out


def _blend_steps(paths: np.ndarray, blend: EsgBlendParams | None, score: float) -> np.ndarray:
    if blend is None:
        return paths
    return esg_valued_return(paths, score, blend)


def _overflown(paths: np.ndarray, zeta: np.ndarray) -> np.ndarray:
    raw = np.abs(np.cumsum(paths, axis=1)).max(axis=1) > OVERFLOW_BOUND
    blended = np.abs(np.cumsum(zeta, axis=1)).max(axis=1) > OVERFLOW_BOUND
    return raw | blended


def simulate_trajectories(
    fit: ArmaGarchFit,
    nig: NigParams,
    t_max: int,
    n_scenarios: int,
    seed: int,
    *,
    t_min: int = 15,
    blend: EsgBlendParams | None = None,
    score: float = 0.0,
    spot: float = 1.0,
) -> TrajectoryEnsemble:
    """Simulate S return trajectories of length t_max for one asset.

    Per-step returns are blended first and only then cumulated into price
    paths: prices = spot * exp(cumsum(zeta)). With no blend (or lambda = 0)
    zeta equals the raw returns bitwise, so the price paths are the plain
    compounded paths scaled by spot.
    """
    if nig.d != 1:
        raise DomainError(f"trajectory simulation is single-asset, got dimension {nig.d}")
    if not 1 <= t_min <= t_max:
        raise DomainError(f"need 1 <= t_min <= t_max, got t_min={t_min}, t_max={t_max}")
    if n_scenarios < 1:
        raise DomainError(f"need at least one scenario, got {n_scenarios}")
    if not (math.isfinite(spot) and spot > 0.0):
        raise DomainError(f"spot must be positive, got {spot}")
    if abs(score) > 1.0:
        raise DomainError(f"normalized score outside [-1, 1]: {score}")

    rng = np.random.Generator(np.random.Philox(seed))
    z = nig.sample(n_scenarios * t_max, rng)[:, 0].reshape(n_scenarios, t_max)
    paths = _roll_paths(fit, z)
    zeta = _blend_steps(paths, blend, score)

    bad = _overflown(paths, zeta)
    redrawn = 0
    rounds = 0
    while bad.any():
        rounds += 1
        if rounds > _MAX_REDRAW_ROUNDS:
            raise SimulationError(
                f"{int(bad.sum())} paths still exceed cumulative-return bound "
                f"{OVERFLOW_BOUND} after {_MAX_REDRAW_ROUNDS} redraw rounds"
            )
        idx = np.flatnonzero(bad)
        z_new = nig.sample(idx.size * t_max, rng)[:, 0].reshape(idx.size, t_max)
        paths[idx] = _roll_paths(fit, z_new)
        zeta = _blend_steps(paths, blend, score)
        redrawn += idx.size
        still = _overflown(paths[idx], zeta[idx])
        bad = np.zeros_like(bad)
        bad[idx[still]] = True

    prices = spot * np.exp(np.cumsum(zeta, axis=1))
    return TrajectoryEnsemble(
        paths=paths,
        zeta=zeta,
        prices=prices,
        spot=float(spot),
        t_min=t_min,
        t_max=t_max,
        seed=seed,
        diagnostics={"redrawn_paths": redrawn, "redraw_rounds": rounds},
    )
