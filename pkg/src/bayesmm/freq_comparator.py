"""Closed-form frequentist fit for the balanced design.

ANOVA point estimates (exact REML for balanced data), Wald intervals for
the regression coefficients, an exact chi-square interval for sigma^2,
and a modified large-sample interval for sigma_u^2. Everything comes from
the two mean squares, so no iterative fitting engine is involved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from .balanced_model import SufficientStats
from .errors import DomainError
from .numkernel import quantile_chi2, quantile_f, quantile_normal, solve_spd

__all__ = ["FreqFit", "fit_freq"]


@dataclass(frozen=True, eq=False)
class FreqFit:
    """Point estimates and per-parameter confidence intervals.

    Interval keys match the posterior summary naming: "sigma2",
    "sigma_u2", "beta_0", ..., "beta_{p-1}".
    """

    sigma2_hat: float
    sigma_u2_hat: float
    beta_hat: np.ndarray
    intervals: Dict[str, Tuple[float, float]]
    df_within: int
    df_between: int
    level: float

    def estimate(self, name: str) -> float:
        if name == "sigma2":
            return self.sigma2_hat
        if name == "sigma_u2":
            return self.sigma_u2_hat
        if name.startswith("beta_"):
            return float(self.beta_hat[int(name[5:])])
        raise KeyError(name)


def _mls_interval(
    msb: float, msw: float, dfb: int, dfw: int, w: int, alpha: float
) -> Tuple[float, float]:
    """Modified large-sample interval for (msb - msw) / w, truncated at 0.

    Ting-Burdick style combination of the two chi-square pivots; exact-df
    quantile constants, so the interval stays calibrated at small n where
    a naive Satterthwaite match collapses against the zero boundary.
    """
    g1 = 1.0 - dfb / quantile_chi2(dfb, 1.0 - alpha)
    h2 = dfw / quantile_chi2(dfw, alpha) - 1.0
    f1 = quantile_f(dfb, dfw, 1.0 - alpha)
    g12 = ((f1 - 1.0) ** 2 - g1 * g1 * f1 * f1 - h2 * h2) / f1
    vl = g1 * g1 * msb * msb + h2 * h2 * msw * msw + g12 * msb * msw
    lo = (msb - msw - math.sqrt(max(vl, 0.0))) / w

    h1 = dfb / quantile_chi2(dfb, alpha) - 1.0
    g2 = 1.0 - dfw / quantile_chi2(dfw, 1.0 - alpha)
    f2 = quantile_f(dfb, dfw, alpha)
    h12 = ((1.0 - f2) ** 2 - h1 * h1 * f2 * f2 - g2 * g2) / f2
    vu = h1 * h1 * msb * msb + g2 * g2 * msw * msw + h12 * msb * msw
    hi = (msb - msw + math.sqrt(max(vu, 0.0))) / w
    return max(lo, 0.0), max(hi, 0.0)


def fit_freq(s: SufficientStats, level: float = 0.95) -> FreqFit:
    """ANOVA estimates with per-parameter confidence intervals.

    sigma2_hat = Q1 / (n(w-1)); sigma_u2_hat = max(0, (MSB - MSW)/w) where
    MSB = Q2 / (n-p). beta_hat is the OLS fit on group means, with
    covariance ((sigma2_hat + w sigma_u2_hat)/w) (X'X)^-1 and normal-quantile
    Wald intervals. The sigma2 interval inverts Q1/sigma2 ~ chi2_{n(w-1)}.
    """
    if not 0.0 < level < 1.0:
        raise DomainError("level must lie in (0, 1)")
    dfw = s.n * (s.w - 1)
    dfb = s.n - s.p
    if dfw < 1 or dfb < 1:
        raise DomainError("need n(w-1) >= 1 and n-p >= 1 degrees of freedom")
    alpha = 0.5 * (1.0 - level)

    msw = s.q1 / dfw
    msb = s.q2 / dfb
    sigma2_hat = msw
    sigma_u2_hat = max(0.0, (msb - msw) / s.w)

    intervals: Dict[str, Tuple[float, float]] = {}
    if s.q1 > 0.0:
        intervals["sigma2"] = (
            s.q1 / quantile_chi2(dfw, 1.0 - alpha),
            s.q1 / quantile_chi2(dfw, alpha),
        )
    else:
        intervals["sigma2"] = (0.0, 0.0)
    intervals["sigma_u2"] = _mls_interval(msb, msw, dfb, dfw, s.w, alpha)

    # (X'X)^-1 = (n Mn)^-1
    cov = ((sigma2_hat + s.w * sigma_u2_hat) / s.w) * solve_spd(s.mn, np.eye(s.p)) / s.n
    z = quantile_normal(1.0 - alpha)
    se = np.sqrt(np.diag(cov))
    for j in range(s.p):
        bj = float(s.beta_ols[j])
        half = z * float(se[j])
        intervals[f"beta_{j}"] = (bj - half, bj + half)

    return FreqFit(
        sigma2_hat=sigma2_hat,
        sigma_u2_hat=sigma_u2_hat,
        beta_hat=s.beta_ols,
        intervals=intervals,
        df_within=dfw,
        df_between=dfb,
        level=level,
    )
