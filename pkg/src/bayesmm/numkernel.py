"""Numeric foundations shared by every model module.

Log-gamma/log-beta, a log-scale Gauss hypergeometric evaluation, adaptive
log-space quadrature, small SPD matrix algebra, reproducible sampling
streams, and the inverse CDFs needed for interval construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy import linalg as sla
from scipy import special as sps

from ._kernels import BACKEND as _KERNEL_BACKEND
from ._kernels import log_2f1_core as _log_2f1_core
from ._kernels._hyp2f1_py import _WG, _WK, _XK
from .errors import (
    ConvergenceError,
    DomainError,
    InvalidIntervalError,
    NotSPDError,
)

__all__ = [
    "QuadratureSpec",
    "SpdMatrix",
    "RngStream",
    "kernel_backend",
    "log_gamma",
    "log_beta",
    "log_2f1",
    "integrate",
    "cholesky",
    "solve_spd",
    "logdet_spd",
    "sample_gamma",
    "sample_std_normal",
    "sample_mvnormal",
    "sample_uniform",
    "quantile_normal",
    "quantile_chi2",
    "quantile_t",
    "quantile_f",
    "quantile_gamma",
]


def kernel_backend() -> str:
    """Which hypergeometric kernel is active: 'compiled' or 'python'."""
    return _KERNEL_BACKEND


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances and budget for adaptive quadrature."""

    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    max_subdivisions: int = 200

    def __post_init__(self):
        if not (self.abs_tol > 0.0 and self.rel_tol > 0.0):
            raise DomainError("quadrature tolerances must be positive")
        if self.max_subdivisions < 1:
            raise DomainError("max_subdivisions must be at least 1")


class SpdMatrix:
    """Symmetric positive definite matrix with a cached Cholesky factor.

    Symmetry is enforced within 1e-12 relative at construction and the
    Cholesky factorization must succeed (all pivots positive); the stored
    entries and factor are read-only afterwards.
    """

    __slots__ = ("_m", "_chol")

    def __init__(self, entries):
        m = np.array(entries, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
            raise DomainError("SpdMatrix requires a square 2-d array")
        if not np.all(np.isfinite(m)):
            raise DomainError("SpdMatrix entries must be finite")
        scale = float(np.abs(m).max())
        if scale == 0.0:
            raise NotSPDError("zero matrix is not positive definite")
        if float(np.abs(m - m.T).max()) > 1e-12 * scale:
            raise NotSPDError("matrix is not symmetric within 1e-12 relative")
        m = 0.5 * (m + m.T)
        try:
            chol = np.linalg.cholesky(m)
        except np.linalg.LinAlgError as exc:
            raise NotSPDError("matrix is not positive definite") from exc
        m.flags.writeable = False
        chol.flags.writeable = False
        self._m = m
        self._chol = chol

    @property
    def dim(self) -> int:
        return self._m.shape[0]

    @property
    def entries(self) -> np.ndarray:
        return self._m

    @property
    def chol(self) -> np.ndarray:
        """Lower-triangular factor L with L Lt equal to the matrix."""
        return self._chol

    def __repr__(self):
        return f"SpdMatrix({self._m.tolist()!r})"


@dataclass(frozen=True)
class RngStream:
    """Immutable descriptor of a reproducible random stream.

    ``generator()`` derives a fresh ``numpy.random.Generator`` seeded by
    (seed, stream_id), so equal descriptors always reproduce the same
    sequence and distinct stream ids give statistically independent
    streams. Sampling functions accept either a descriptor (fresh
    generator per call) or a live Generator (which advances).
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not isinstance(self.seed, int) or not isinstance(self.stream_id, int):
            raise DomainError("seed and stream_id must be integers")
        if self.seed < 0 or self.stream_id < 0:
            raise DomainError("seed and stream_id must be nonnegative")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.PCG64(ss))


RngLike = Union[RngStream, np.random.Generator]


def _as_generator(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise DomainError("rng must be an RngStream or numpy.random.Generator")


def _finite(name: str, x) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"{name} must be finite, got {x!r}")
    return x


def log_gamma(x: float) -> float:
    """ln Gamma(x) for x > 0."""
    x = _finite("x", x)
    if x <= 0.0:
        raise DomainError(f"log_gamma requires x > 0, got {x}")
    return math.lgamma(x)


def log_beta(a: float, b: float) -> float:
    """ln B(a, b) for a, b > 0."""
    return log_gamma(a) + log_gamma(b) - log_gamma(a + b)


def log_2f1(a: float, b: float, c: float, z: float,
            rel_tol: float = 1e-11, max_panels: int = 1024) -> float:
    """ln 2F1(a, b; c; z), symmetric in the two series parameters.

    The first parameter plays the Euler-integral role and must satisfy
    0 < a < c; b is unrestricted. Evaluated in log space, so parameter
    magnitudes around 1e4 with z up to 0.999 stay representable.
    """
    a = _finite("a", a)
    b = _finite("b", b)
    c = _finite("c", c)
    z = _finite("z", z)
    if not 0.0 < a < c:
        raise DomainError(f"log_2f1 requires 0 < a < c, got a={a}, c={c}")
    if not 0.0 <= z < 1.0:
        raise DomainError(f"log_2f1 requires 0 <= z < 1, got z={z}")
    if z == 0.0 or b == 0.0:
        return 0.0
    return _log_2f1_core(a, b, c, z, rel_tol, max_panels)


def _integrate_panel(f: Callable[[float], float], lo: float, hi: float):
    hw = 0.5 * (hi - lo)
    mid = 0.5 * (lo + hi)
    hv = np.empty(15)
    for i, xi in enumerate(_XK):
        val = float(f(mid + hw * xi))
        if math.isnan(val) or val == math.inf:
            raise DomainError("integrand must return a finite value or -inf")
        hv[i] = val
    m = float(hv.max())
    if m == -math.inf:
        return -math.inf, -math.inf
    e = np.exp(hv - m)
    k = float(e @ _WK)
    g = float(e[1::2] @ _WG)
    err = max(abs(k - g), 1e-15 * k)
    return m + math.log(k * hw), m + math.log(err * hw)


def _logsumexp_list(vals) -> float:
    m = max(vals)
    if m == -math.inf:
        return m
    return m + math.log(sum(math.exp(v - m) for v in vals))


def integrate(f: Callable[[float], float], lo: float, hi: float,
              spec: Optional[QuadratureSpec] = None) -> float:
    """ln of the integral of exp(f) over (lo, hi) by adaptive 7/15 panels.

    f is the log-integrand and may return -inf where the integrand
    vanishes. Panel contributions and error estimates are combined by
    max-shifted log-sum-exp, so integrals far outside float range on the
    linear scale are handled.
    """
    if spec is None:
        spec = QuadratureSpec()
    lo = float(lo)
    hi = float(hi)
    if not (math.isfinite(lo) and math.isfinite(hi)) or not lo < hi:
        raise InvalidIntervalError(f"invalid integration interval ({lo}, {hi})")

    knots = np.linspace(lo, hi, 9)
    los, his, lvals, lerrs = [], [], [], []
    for seg_lo, seg_hi in zip(knots[:-1], knots[1:]):
        lv, le = _integrate_panel(f, seg_lo, seg_hi)
        los.append(seg_lo)
        his.append(seg_hi)
        lvals.append(lv)
        lerrs.append(le)

    log_abs = math.log(spec.abs_tol)
    log_rel = math.log(spec.rel_tol)
    splits = 0
    while True:
        total = _logsumexp_list(lvals)
        err = _logsumexp_list(lerrs)
        if err <= max(log_abs, log_rel + total):
            return total
        if splits >= spec.max_subdivisions:
            raise ConvergenceError(
                f"quadrature did not converge within {spec.max_subdivisions} "
                f"subdivisions (estimate {total:.12g}, log-error {err:.3g})"
            )
        worst = max(range(len(lerrs)), key=lerrs.__getitem__)
        seg_lo, seg_hi = los[worst], his[worst]
        mid = 0.5 * (seg_lo + seg_hi)
        lv1, le1 = _integrate_panel(f, seg_lo, mid)
        lv2, le2 = _integrate_panel(f, mid, seg_hi)
        los[worst], his[worst], lvals[worst], lerrs[worst] = seg_lo, mid, lv1, le1
        los.append(mid)
        his.append(seg_hi)
        lvals.append(lv2)
        lerrs.append(le2)
        splits += 1


def cholesky(m: SpdMatrix) -> np.ndarray:
    """Lower-triangular L with L Lt = m."""
    return m.chol


def solve_spd(m: SpdMatrix, rhs) -> np.ndarray:
    """Solve m x = rhs using the cached factor."""
    rhs = np.asarray(rhs, dtype=float)
    return sla.cho_solve((m.chol, True), rhs)


def logdet_spd(m: SpdMatrix) -> float:
    """ln det(m) from the Cholesky diagonal."""
    return 2.0 * float(np.sum(np.log(np.diag(m.chol))))


def sample_gamma(shape: float, rate: float, rng: RngLike, size=None):
    """Gamma draws in the shape/rate convention (mean shape/rate)."""
    shape = _finite("shape", shape)
    rate = _finite("rate", rate)
    if shape <= 0.0 or rate <= 0.0:
        raise DomainError("gamma shape and rate must be positive")
    return _as_generator(rng).gamma(shape, 1.0 / rate, size)


def sample_std_normal(rng: RngLike, size=None):
    return _as_generator(rng).standard_normal(size)


def sample_mvnormal(mean, cov: SpdMatrix, rng: RngLike, size=None):
    """Multivariate normal draws via the cached Cholesky factor."""
    mean = np.asarray(mean, dtype=float)
    if mean.ndim != 1 or mean.size != cov.dim:
        raise DomainError("mean length must match covariance dimension")
    g = _as_generator(rng)
    if size is None:
        return mean + cov.chol @ g.standard_normal(mean.size)
    z = g.standard_normal((int(size), mean.size))
    return mean + z @ cov.chol.T


def sample_uniform(rng: RngLike, size=None):
    """Uniform draws strictly inside (0, 1)."""
    g = _as_generator(rng)
    bits = g.integers(0, 1 << 53, size=size)
    return (bits + 0.5) / float(1 << 53)


def _check_prob(p: float) -> float:
    p = _finite("p", p)
    if not 0.0 < p < 1.0:
        raise DomainError(f"probability must lie in (0,1), got {p}")
    return p


def quantile_normal(p: float) -> float:
    return float(sps.ndtri(_check_prob(p)))


def quantile_chi2(df: float, p: float) -> float:
    df = _finite("df", df)
    if df <= 0.0:
        raise DomainError("chi-square df must be positive")
    return 2.0 * float(sps.gammaincinv(0.5 * df, _check_prob(p)))


def quantile_t(df: float, p: float) -> float:
    df = _finite("df", df)
    if df <= 0.0:
        raise DomainError("t df must be positive")
    return float(sps.stdtrit(df, _check_prob(p)))


def quantile_gamma(shape: float, rate: float, p: float) -> float:
    shape = _finite("shape", shape)
    rate = _finite("rate", rate)
    if shape <= 0.0 or rate <= 0.0:
        raise DomainError("gamma shape and rate must be positive")
    return float(sps.gammaincinv(shape, _check_prob(p))) / rate


def quantile_f(dfn: float, dfd: float, p: float) -> float:
    dfn = _finite("dfn", dfn)
    dfd = _finite("dfd", dfd)
    if dfn <= 0.0 or dfd <= 0.0:
        raise DomainError("F degrees of freedom must be positive")
    return float(sps.fdtri(dfn, dfd, _check_prob(p)))
