"""The lambda-blended ESG-valued return and its scenario-level application.

The core quantity is the affine blend

    zeta = lambda * sigma / c + (1 - lambda) * r

of a normalized ESG score sigma in [-1, 1] and a daily return r. The
riskless asset carries the maximum score (raw 100, normalized +1), so its
blended rate is zeta_f = lambda/c + (1 - lambda) * r_f.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .errors import DomainError, ShapeError


@dataclasses.dataclass(frozen=True)
class EsgBlendParams:
    """Affinity lambda in [0, 1] and the trading-days-per-year scale c."""

    lam: float
    c: float = 255.0

    def __post_init__(self):
        if not (math.isfinite(self.lam) and 0.0 <= self.lam <= 1.0):
            raise DomainError(f"lambda must lie in [0, 1], got {self.lam}")
        if not (math.isfinite(self.c) and self.c > 0.0):
            raise DomainError(f"c must be positive, got {self.c}")


def esg_valued_return(r, sigma, p: EsgBlendParams):
    """Blend return(s) r with normalized score(s) sigma.

    Scalar in, scalar out; arrays broadcast elementwise. At lambda = 0 the
    result is bitwise identical to r.
    """
    sigma_arr = np.asarray(sigma, dtype=float)
    if np.any(np.abs(sigma_arr) > 1.0):
        raise DomainError("normalized score outside [-1, 1]")
    out = p.lam * sigma_arr / p.c + (1.0 - p.lam) * np.asarray(r, dtype=float)
    if np.isscalar(r) and sigma_arr.ndim == 0:
        return float(out)
    return out


def esg_valued_riskless(r_f, p: EsgBlendParams):
    """Blended riskless rate; the bond is scored raw 100, normalized +1."""
    out = p.lam / p.c + (1.0 - p.lam) * np.asarray(r_f, dtype=float)
    if np.isscalar(r_f):
        return float(out)
    return out


def blend_scenarios(scen, scores, p: EsgBlendParams):
    """Apply the blend per asset across all scenarios.

    ``scen`` is either a plain S x I array of returns or a ScenarioMatrix;
    the result has the same type. ``scores`` holds one normalized score per
    asset, constant across scenarios.
    """
    values = scen if isinstance(scen, np.ndarray) else scen.values
    scores = np.asarray(scores, dtype=float)
    if scores.ndim != 1 or scores.shape[0] != values.shape[1]:
        raise ShapeError(
            f"score vector length {scores.shape}, expected ({values.shape[1]},)"
        )
    if np.any(np.abs(scores) > 1.0):
        raise DomainError("normalized score outside [-1, 1]")
    blended = p.lam * scores[np.newaxis, :] / p.c + (1.0 - p.lam) * values
    if isinstance(scen, np.ndarray):
        return blended
    return dataclasses.replace(scen, values=blended, kind="esg")
