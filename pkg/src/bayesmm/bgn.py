"""Compound beta-gamma-normal distribution.

Three-stage law for (x1, inv_x2, x3): x1 follows the four-parameter
generalized beta with lam = kappa2/kappa1; given x1, the precision inv_x2
is Gamma(phi1, kappa1 - kappa2 x1) in shape/rate form; given both, x3 is
multivariate normal with mean mu and covariance Sigma/(inv_x2 (1-x1)).
The joint density is taken with respect to (x1, inv_x2, x3) directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import gbeta4
from .errors import DomainError
from .numkernel import RngLike, SpdMatrix, _as_generator, solve_spd

__all__ = ["BGNParams", "delta_marginal", "joint_log_pdf", "sample"]


@dataclass(frozen=True, eq=False)
class BGNParams:
    """Compound-distribution parameters; kappa1 > kappa2 >= 0 keeps every
    conditional gamma rate positive."""

    phi1: float
    phi2: float
    phi3: float
    kappa1: float
    kappa2: float
    mu: np.ndarray
    sigma_scale: SpdMatrix

    def __post_init__(self):
        for name in ("phi1", "phi2", "phi3", "kappa1", "kappa2"):
            val = float(getattr(self, name))
            if not math.isfinite(val):
                raise DomainError(f"{name} must be finite")
            object.__setattr__(self, name, val)
        if self.phi1 <= 0.0 or self.phi2 <= 0.0 or self.phi3 <= 0.0:
            raise DomainError("phi1, phi2, phi3 must be positive")
        if not 0.0 <= self.kappa2 < self.kappa1:
            raise DomainError("required: kappa1 > kappa2 >= 0")
        mu = np.asarray(self.mu, dtype=float)
        if mu.ndim != 1 or mu.size < 1 or not np.all(np.isfinite(mu)):
            raise DomainError("mu must be a finite vector")
        if not isinstance(self.sigma_scale, SpdMatrix):
            raise DomainError("sigma_scale must be an SpdMatrix")
        if self.sigma_scale.dim != mu.size:
            raise DomainError("mu length must match sigma_scale dimension")
        mu = mu.copy()
        mu.flags.writeable = False
        object.__setattr__(self, "mu", mu)

    @property
    def p(self) -> int:
        return self.mu.size


def delta_marginal(b: BGNParams) -> gbeta4.G4BParams:
    """Marginal law of the first component."""
    return gbeta4.G4BParams(b.phi1, b.phi2, b.phi3, b.kappa2 / b.kappa1)


def _gamma_log_pdf(x: float, shape: float, rate: float) -> float:
    return (
        shape * math.log(rate)
        - math.lgamma(shape)
        + (shape - 1.0) * math.log(x)
        - rate * x
    )


def joint_log_pdf(b: BGNParams, x1: float, inv_x2: float, x3) -> float:
    """Joint log-density at (x1, inv_x2, x3)."""
    x1 = float(x1)
    inv_x2 = float(inv_x2)
    x3 = np.asarray(x3, dtype=float)
    if not 0.0 < x1 < 1.0:
        raise DomainError("x1 must lie in (0, 1)")
    if inv_x2 <= 0.0 or not math.isfinite(inv_x2):
        raise DomainError("inv_x2 must be positive")
    if x3.shape != (b.p,):
        raise DomainError("x3 must be a vector of the model dimension")

    rate = b.kappa1 - b.kappa2 * x1
    prec = inv_x2 * (1.0 - x1)
    d = x3 - b.mu
    quad = float(d @ solve_spd(b.sigma_scale, d)) * prec
    logdet_cov = -b.p * math.log(prec) + 2.0 * float(
        np.sum(np.log(np.diag(b.sigma_scale.chol)))
    )
    return (
        gbeta4.log_pdf(delta_marginal(b), x1)
        + _gamma_log_pdf(inv_x2, b.phi1, rate)
        - 0.5 * (b.p * math.log(2.0 * math.pi) + logdet_cov + quad)
    )


def sample(b: BGNParams, rng: RngLike, size=None):
    """Compound draws (x1, inv_x2, x3); vectorized over size."""
    gen = _as_generator(rng)
    n = 1 if size is None else int(size)
    x1 = np.atleast_1d(gbeta4.sample(delta_marginal(b), gen, size=n))
    rate = b.kappa1 - b.kappa2 * x1
    inv_x2 = gen.gamma(b.phi1, 1.0, size=n) / rate
    z = gen.standard_normal((n, b.p))
    scale = 1.0 / np.sqrt(inv_x2 * (1.0 - x1))
    x3 = b.mu + scale[:, None] * (z @ b.sigma_scale.chol.T)
    if size is None:
        return float(x1[0]), float(inv_x2[0]), x3[0]
    return x1, inv_x2, x3
