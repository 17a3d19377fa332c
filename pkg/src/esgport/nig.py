"""Multivariate normal inverse Gaussian distribution: fit, density, sampling.

Parameterization: the normal variance-mean mixture

    X = location + skewness * W + sqrt(W) * L Z,   L L' = scale,

with W inverse Gaussian normalized to E[W] = 1 and shape ``shape`` (the
alpha-bar style convention, which removes the usual mixing-scale
redundancy). Bijection to the classical 1-d (alpha, beta, delta, mu):

    gamma_bar = sqrt(alpha^2 - beta^2)
    scale     = delta / gamma_bar          (variance of the Gaussian part)
    shape     = delta * gamma_bar
    skewness  = beta * scale
    location  = mu

and inversely delta = sqrt(scale * shape), alpha = sqrt(shape/scale + beta^2),
beta = skewness / scale.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
from scipy.special import kve

from .errors import DomainError, FitError, ShapeError, SingularSystemError

MAX_EM_ITERATIONS = 500
EM_RELATIVE_TOL = 1e-8
_SHAPE_CAP = 1e8  # beyond this the NIG is numerically Gaussian


@dataclasses.dataclass(frozen=True)
class NigParams:
    """NIG parameters in the E[W] = 1 mixture convention; d >= 1."""

    location: np.ndarray
    skewness: np.ndarray
    scale: np.ndarray
    shape: float
    diagnostics: dict = dataclasses.field(default_factory=dict, compare=False)

    def __post_init__(self):
        loc = np.atleast_1d(np.asarray(self.location, dtype=float))
        skew = np.atleast_1d(np.asarray(self.skewness, dtype=float))
        scale = np.atleast_2d(np.asarray(self.scale, dtype=float))
        object.__setattr__(self, "location", loc)
        object.__setattr__(self, "skewness", skew)
        object.__setattr__(self, "scale", scale)
        d = loc.size
        if skew.size != d or scale.shape != (d, d):
            raise ShapeError(
                f"inconsistent NIG dimensions: location {d}, skewness {skew.size}, scale {scale.shape}"
            )
        if not (math.isfinite(self.shape) and self.shape > 0.0):
            raise DomainError(f"shape must be positive, got {self.shape}")
        try:
            np.linalg.cholesky(scale)
        except np.linalg.LinAlgError:
            raise DomainError("scale matrix must be symmetric positive definite") from None

    @property
    def d(self) -> int:
        return self.location.size

    @classmethod
    def from_classical(cls, alpha: float, beta: float, delta: float, mu: float) -> "NigParams":
        """Classical 1-d (alpha, beta, delta, mu) -> mixture convention."""
        if not (alpha > 0 and delta > 0 and abs(beta) < alpha):
            raise DomainError("need alpha > |beta| and delta > 0")
        gamma_bar = math.sqrt(alpha * alpha - beta * beta)
        scale = delta / gamma_bar
        return cls(
            location=np.array([mu]),
            skewness=np.array([beta * scale]),
            scale=np.array([[scale]]),
            shape=delta * gamma_bar,
        )

    def to_classical(self) -> tuple[float, float, float, float]:
        """Mixture convention -> classical (alpha, beta, delta, mu); 1-d only."""
        if self.d != 1:
            raise DomainError("classical parameters are defined for d = 1")
        scale = float(self.scale[0, 0])
        beta = float(self.skewness[0]) / scale
        delta = math.sqrt(scale * self.shape)
        alpha = math.sqrt(self.shape / scale + beta * beta)
        return alpha, beta, delta, float(self.location[0])

    @classmethod
    def standardized(cls, shape: float, rho: float) -> "NigParams":
        """Zero-mean unit-variance 1-d NIG with skew rho in (-1, 1).

        rho = beta/alpha of the classical form; shape is the mixture shape.
        """
        if not -1.0 < rho < 1.0:
            raise DomainError(f"rho must lie in (-1, 1), got {rho}")
        if shape <= 0.0:
            raise DomainError(f"shape must be positive, got {shape}")
        # Var = s + skew^2/shape = 1 and rho = skew/sqrt(shape*s + skew^2)
        # pin down s = 1 - rho^2, skew = rho * sqrt(shape).
        s = 1.0 - rho * rho
        skew = rho * math.sqrt(shape)
        return cls(
            location=np.array([-skew]),
            skewness=np.array([skew]),
            scale=np.array([[s]]),
            shape=shape,
        )

    def to_dict(self) -> dict:
        return {
            "location": self.location.tolist(),
            "skewness": self.skewness.tolist(),
            "scale": self.scale.tolist(),
            "shape": float(self.shape),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "NigParams":
        return cls(
            location=np.asarray(payload["location"], dtype=float),
            skewness=np.asarray(payload["skewness"], dtype=float),
            scale=np.asarray(payload["scale"], dtype=float),
            shape=float(payload["shape"]),
        )

    def mean(self) -> np.ndarray:
        return self.location + self.skewness

    def cov(self) -> np.ndarray:
        # Var(X) = E[W] scale + Var(W) skew skew', Var(W) = 1/shape
        return self.scale + np.outer(self.skewness, self.skewness) / self.shape

    def logpdf(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.d:
            raise ShapeError(f"x has {x.shape[1]} columns, expected {self.d}")
        return _nig_logpdf(x, self.location, self.skewness, self.scale, 1.0, self.shape)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw n vectors; draws W first, then the Gaussian block."""
        w = rng.wald(1.0, self.shape, size=n)
        z = rng.standard_normal((n, self.d))
        chol = np.linalg.cholesky(self.scale)
        return self.location + self.skewness * w[:, None] + np.sqrt(w)[:, None] * (z @ chol.T)


def _log_kv(order: float, arg: np.ndarray) -> np.ndarray:
    """log K_order(arg), stable for large arguments via the scaled Bessel."""
    arg = np.asarray(arg, dtype=float)
    return np.log(kve(order, arg)) - arg


def _nig_logpdf(x, mu, gamma, sigma, delta, eta) -> np.ndarray:
    """Marginal log density of the mixture with W ~ IG(mean delta, shape eta)."""
    d = mu.size
    sign, logdet = np.linalg.slogdet(sigma)
    if sign <= 0:
        raise SingularSystemError("scale matrix is not positive definite")
    sigma_inv = np.linalg.inv(sigma)
    a = eta / delta**2 + float(gamma @ sigma_inv @ gamma)
    centered = x - mu
    q = np.einsum("ni,ij,nj->n", centered, sigma_inv, centered)
    b = eta + q
    order = -0.5 - 0.5 * d
    # Normalizing-constant ratio of the IG prior (a GIG with p = -1/2,
    # a0 = eta/delta^2, b0 = eta) to the GIG posterior; the log2 terms cancel.
    sqrt_ab0 = eta / delta
    log_const = (
        -0.25 * (math.log(eta / delta**2) - math.log(eta))
        - 0.5 * d * math.log(2.0 * math.pi)
        - 0.5 * logdet
        - float(_log_kv(-0.5, np.array([sqrt_ab0]))[0])
        - 0.5 * order * math.log(a)
    )
    linear = centered @ (sigma_inv @ gamma)
    return log_const + 0.5 * order * np.log(b) + _log_kv(order, np.sqrt(a * b)) + linear


def _gig_moments(p: float, a: float, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """E[W] and E[1/W] for W ~ GIG(p, a, b), elementwise over b."""
    sqrt_ab = np.sqrt(a * b)
    ratio = np.sqrt(b / a)
    log_kp = _log_kv(p, sqrt_ab)
    e_w = ratio * np.exp(_log_kv(p + 1.0, sqrt_ab) - log_kp)
    e_winv = np.exp(_log_kv(p - 1.0, sqrt_ab) - log_kp) / ratio
    return e_w, e_winv


def fit_joint_nig(residuals) -> NigParams:
    """EM fit of a d-dimensional NIG to standardized innovation rows.

    The log-likelihood is non-decreasing across iterations; convergence is
    declared at relative change < 1e-8 or 500 iterations. A non-positive-
    definite scale update is ridge-repaired (noted in diagnostics); if the
    repair fails the fit aborts with SingularSystemError.
    """
    x = np.asarray(residuals, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, d = x.shape
    if d < 1:
        raise DomainError("need at least one column")
    if n <= 10 * d:
        raise DomainError(f"need more than 10*d = {10 * d} rows, got {n}")
    if not np.all(np.isfinite(x)):
        raise DomainError("residual matrix contains non-finite entries")

    mu = x.mean(axis=0)
    gamma = np.zeros(d)
    sigma = np.cov(x, rowvar=False, ddof=1).reshape(d, d).copy()
    sigma = _ensure_spd(sigma, None)
    delta, eta = 1.0, 1.0

    diagnostics: dict = {"iterations": 0, "converged": False, "ridge_repairs": 0, "loglik": []}
    last_ll = -math.inf
    for iteration in range(1, MAX_EM_ITERATIONS + 1):
        sigma_inv = np.linalg.inv(sigma)
        centered = x - mu
        q = np.einsum("ni,ij,nj->n", centered, sigma_inv, centered)
        a_post = eta / delta**2 + float(gamma @ sigma_inv @ gamma)
        b_post = eta + q
        e_w, e_winv = _gig_moments(-0.5 * (1 + d), a_post, b_post)

        s1 = float(e_winv.mean())
        s2 = float(e_w.mean())
        s4 = x.mean(axis=0)
        s5 = (x * e_winv[:, None]).mean(axis=0)
        s6 = (x.T * e_winv) @ x / n
        denom = 1.0 - s1 * s2
        if abs(denom) < 1e-14:
            raise FitError("EM collapsed: 1 - E[1/W]E[W] vanished")
        mu = (s4 - s2 * s5) / denom
        gamma = (s5 - s1 * s4) / denom
        sigma_new = s6 - np.outer(s5, mu) - np.outer(mu, s5) + s1 * np.outer(mu, mu)
        sigma_new -= s2 * np.outer(gamma, gamma)
        sigma = _ensure_spd(0.5 * (sigma_new + sigma_new.T), diagnostics)

        delta = s2
        inv_spread = s1 - 1.0 / s2
        eta = 1.0 / inv_spread if inv_spread > 1e-12 else _SHAPE_CAP * delta

        ll = float(_nig_logpdf(x, mu, gamma, sigma, delta, eta).sum())
        diagnostics["loglik"].append(ll)
        diagnostics["iterations"] = iteration
        if abs(ll - last_ll) <= EM_RELATIVE_TOL * (1.0 + abs(ll)):
            diagnostics["converged"] = True
            break
        last_ll = ll

    # fold the mixing mean into the scale so E[W] = 1
    params = NigParams(
        location=mu,
        skewness=gamma * delta,
        scale=sigma * delta,
        shape=min(eta / delta, _SHAPE_CAP),
        diagnostics=diagnostics,
    )
    return params


def _ensure_spd(sigma: np.ndarray, diagnostics: dict | None) -> np.ndarray:
    try:
        np.linalg.cholesky(sigma)
        return sigma
    except np.linalg.LinAlgError:
        pass
    ridge = 1e-10 * max(np.trace(sigma), 1e-30) / sigma.shape[0]
    eigmin = float(np.linalg.eigvalsh(sigma)[0])
    repaired = sigma + (abs(eigmin) + ridge) * np.eye(sigma.shape[0])
    try:
        np.linalg.cholesky(repaired)
    except np.linalg.LinAlgError:
        raise SingularSystemError("scale matrix irreparably singular") from None
    if diagnostics is not None:
        diagnostics["ridge_repairs"] = diagnostics.get("ridge_repairs", 0) + 1
    return repaired
