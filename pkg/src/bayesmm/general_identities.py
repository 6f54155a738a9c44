"""Numerical verification of the unbalanced vector-random-effect algebra.

The general model is y_it = x_i' beta + z_i' u_i + e_it with group sizes
w_i, u_i ~ N_q(0, sigma^2 Lambda), e_it ~ N(0, sigma^2). Stacked, the
relative covariance of y is Sigma = I_N + K Z' (I_n o Lambda) Z K' where
K maps group means to observations and Z is block diagonal in the z_i
(o denotes the Kronecker product). Everything here exists to check, by
direct dense linear algebra on small designs, the closed identities that
would underpin a conjugate treatment of this model: the low-rank inverse
and determinant of Sigma, the weighted/generalized least squares fits,
and a three-way decomposition of the Gaussian quadratic form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict

import numpy as np

from .errors import BayesmmError, DomainError, RankDeficiencyError
from .numkernel import RngStream, SpdMatrix

__all__ = [
    "GeneralDesign",
    "GeneralStats",
    "SigmaKronOps",
    "QuadraticDecomposition",
    "sigma_kron_ops",
    "general_stats",
    "verify_quadratic_decomposition",
    "woodbury_beta_covariance",
    "identity_report",
    "balanced_scalar_design",
]

_DENSE_CAP = 64  # dense reference computations stay exact and fast below this


@dataclass(frozen=True, eq=False)
class GeneralDesign:
    """One unbalanced design: group sizes w, per-group covariate vectors z,
    fixed-effect design X, relative random-effect covariance Lambda, and a
    parameter point (sigma2, beta) at which quadratic forms are evaluated."""

    w: np.ndarray
    z: np.ndarray
    X: np.ndarray
    lam: SpdMatrix
    sigma2: float
    beta: np.ndarray

    def __post_init__(self):
        w = np.array(self.w, dtype=int)
        z = np.array(self.z, dtype=float)
        X = np.array(self.X, dtype=float)
        beta = np.array(self.beta, dtype=float)
        if w.ndim != 1 or np.any(w < 1):
            raise DomainError("group sizes must be integers >= 1")
        n = w.size
        if z.ndim != 2 or z.shape[0] != n:
            raise DomainError("z must be an n x q array of covariate vectors")
        if not np.all(np.isfinite(z)):
            raise DomainError("z must be finite")
        if X.ndim != 2 or X.shape[0] != n or not np.all(np.isfinite(X)):
            raise DomainError("X must be a finite n x p array")
        p = X.shape[1]
        if np.linalg.matrix_rank(X) < p:
            raise RankDeficiencyError("X does not have full column rank")
        if self.lam.dim != z.shape[1]:
            raise DomainError("Lambda dimension must match the z vectors")
        if float(self.sigma2) <= 0.0:
            raise DomainError("sigma2 must be positive")
        if beta.ndim != 1 or beta.size != p or not np.all(np.isfinite(beta)):
            raise DomainError("beta must be a finite vector of length p")
        if int(w.sum()) > _DENSE_CAP:
            raise DomainError(
                f"total observations capped at {_DENSE_CAP} for dense verification"
            )
        for name, arr in (("w", w), ("z", z), ("X", X), ("beta", beta)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "sigma2", float(self.sigma2))

    @property
    def n(self) -> int:
        return self.w.size

    @property
    def q(self) -> int:
        return self.z.shape[1]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def total(self) -> int:
        return int(self.w.sum())

    def k_matrix(self) -> np.ndarray:
        """N x n zero-one matrix replicating group values over observations."""
        out = np.zeros((self.total, self.n))
        row = 0
        for i, wi in enumerate(self.w):
            out[row : row + wi, i] = 1.0
            row += wi
        return out

    def z_matrix(self) -> np.ndarray:
        """nq x n block-diagonal matrix with the z_i as column blocks."""
        n, q = self.n, self.q
        out = np.zeros((n * q, n))
        for i in range(n):
            out[i * q : (i + 1) * q, i] = self.z[i]
        return out


@dataclass(frozen=True, eq=False)
class GeneralStats:
    """Weighted summaries of one response vector under a general design.

    rho is the bracketed ratio 1 - r' G r / Q2 with r = ybar - X beta_w;
    the quadratic decomposition consumes Q2 * rho directly, so the ratio is
    stored without any root.
    """

    G: np.ndarray
    ybar: np.ndarray
    beta_w: np.ndarray
    beta_lambda: np.ndarray
    q1: float
    q2: float
    rho: float


@dataclass(frozen=True, eq=False)
class SigmaKronOps:
    """Dense relative covariance, its low-rank-form inverse, and log-det,
    each paired with the gap against the direct dense computation."""

    dense: np.ndarray
    inverse: np.ndarray
    logdet: float
    inverse_gap: float
    logdet_gap: float


@dataclass(frozen=True, eq=False)
class QuadraticDecomposition:
    """The Gaussian quadratic form computed three ways, plus the residuals
    of the two cross terms whose vanishing makes the split exact."""

    value_dense: float
    value_split: float
    value_traced: float
    max_rel_gap: float
    centering_cross_term: float
    projection_cross_term: float


def _core_matrix(d: GeneralDesign) -> np.ndarray:
    """I_n o Lambda^-1 + Z W Z', the (nq x nq) kernel of all low-rank forms."""
    lam_inv = np.linalg.inv(d.lam.entries)
    m = np.kron(np.eye(d.n), lam_inv)
    zmat = d.z_matrix()
    return m + zmat @ np.diag(d.w.astype(float)) @ zmat.T


def sigma_kron_ops(d: GeneralDesign) -> SigmaKronOps:
    """Relative covariance of the stacked response, built blockwise, with
    its inverse by the Woodbury identity and log-determinant by the matrix
    determinant lemma; both are checked against dense references."""
    total = d.total
    dense = np.eye(total)
    row = 0
    for i, wi in enumerate(d.w):
        bump = float(d.z[i] @ d.lam.entries @ d.z[i])
        dense[row : row + wi, row : row + wi] += bump
        row += wi

    kz = d.k_matrix() @ d.z_matrix().T  # N x nq
    core = _core_matrix(d)
    inverse = np.eye(total) - kz @ np.linalg.solve(core, kz.T)
    sign, core_logdet = np.linalg.slogdet(core)
    if sign <= 0:
        raise BayesmmError("low-rank core matrix is not positive definite")
    logdet = d.n * float(np.linalg.slogdet(d.lam.entries)[1]) + float(core_logdet)

    direct_inv = np.linalg.inv(dense)
    inv_gap = float(
        np.max(np.abs(inverse - direct_inv)) / max(np.max(np.abs(direct_inv)), 1e-300)
    )
    sign_d, logdet_d = np.linalg.slogdet(dense)
    if sign_d <= 0:
        raise BayesmmError("dense relative covariance is not positive definite")
    logdet_gap = float(abs(logdet - logdet_d) / max(abs(logdet_d), 1.0))
    return SigmaKronOps(
        dense=dense,
        inverse=inverse,
        logdet=logdet,
        inverse_gap=inv_gap,
        logdet_gap=logdet_gap,
    )


def general_stats(d: GeneralDesign, y: np.ndarray) -> GeneralStats:
    """Group means, the two least-squares fits, Q1, Q2, and rho."""
    y = np.asarray(y, dtype=float)
    if y.shape != (d.total,) or not np.all(np.isfinite(y)):
        raise DomainError("y must be a finite vector with one entry per observation")
    wvec = d.w.astype(float)
    wmat = np.diag(wvec)
    kmat = d.k_matrix()
    ybar = (kmat.T @ y) / wvec

    ops = sigma_kron_ops(d)
    a_mat = kmat.T @ ops.inverse @ kmat  # W - G
    g_mat = wmat - a_mat

    xtw = d.X.T @ wmat
    beta_w = np.linalg.solve(xtw @ d.X, xtw @ ybar)
    xta = d.X.T @ a_mat
    beta_lambda = np.linalg.solve(xta @ d.X, xta @ ybar)

    q1 = float(np.sum((y - kmat @ ybar) ** 2))
    r = ybar - d.X @ beta_w
    q2 = float(r @ wmat @ r)
    if q2 <= 0.0:
        raise DomainError("degenerate response: Q2 = 0 leaves rho undefined")
    rho = 1.0 - float(r @ g_mat @ r) / q2
    return GeneralStats(
        G=g_mat,
        ybar=ybar,
        beta_w=beta_w,
        beta_lambda=beta_lambda,
        q1=q1,
        q2=q2,
        rho=rho,
    )


def verify_quadratic_decomposition(
    d: GeneralDesign, y: np.ndarray
) -> QuadraticDecomposition:
    """(y - KX beta)' Sigma^-1 (y - KX beta) three ways.

    (dense)  direct evaluation with the dense inverse;
    (split)  Q1 + (ybar - X beta_L)' A (ybar - X beta_L)
                + (beta - beta_L)' X'AX (beta - beta_L), A = K' Sigma^-1 K;
    (traced) Q1 + Q2 rho - trace[(beta_w - beta_L)(beta_w - beta_L)' X'AX]
                + (beta - beta_L)' X'AX (beta - beta_L).
    Also reports the two cross terms whose exact cancellation justifies the
    split, normalized by the magnitude of the quadratic form.
    """
    stats = general_stats(d, y)
    ops = sigma_kron_ops(d)
    kmat = d.k_matrix()
    a_mat = kmat.T @ ops.inverse @ kmat
    xax = d.X.T @ a_mat @ d.X

    resid = y - kmat @ (d.X @ d.beta)
    value_dense = float(resid @ np.linalg.solve(ops.dense, resid))

    r_lam = stats.ybar - d.X @ stats.beta_lambda
    diff = d.beta - stats.beta_lambda
    value_split = stats.q1 + float(r_lam @ a_mat @ r_lam) + float(diff @ xax @ diff)

    dw = stats.beta_w - stats.beta_lambda
    value_traced = (
        stats.q1
        + stats.q2 * stats.rho
        - float(np.trace(np.outer(dw, dw) @ xax))
        + float(diff @ xax @ diff)
    )

    scale = max(abs(value_dense), abs(value_split), abs(value_traced), 1e-300)
    gaps = [
        abs(value_dense - value_split),
        abs(value_dense - value_traced),
        abs(value_split - value_traced),
    ]

    # cross term 1: centered residuals are Sigma^-1-orthogonal to group space
    centered = y - kmat @ stats.ybar
    cross1 = float(
        np.abs(centered @ ops.inverse @ kmat @ (stats.ybar - d.X @ d.beta))
    )
    # cross term 2: A X lies in the column space of the A-weighted hat matrix
    h_lam = a_mat @ d.X @ np.linalg.solve(xax, d.X.T)
    cross2 = float(np.max(np.abs((np.eye(d.n) - h_lam) @ a_mat @ d.X)))

    return QuadraticDecomposition(
        value_dense=value_dense,
        value_split=value_split,
        value_traced=value_traced,
        max_rel_gap=max(gaps) / scale,
        centering_cross_term=cross1 / scale,
        projection_cross_term=cross2 / max(float(np.max(np.abs(a_mat @ d.X))), 1e-300),
    )


def woodbury_beta_covariance(d: GeneralDesign, check_tol: float = 1e-8) -> np.ndarray:
    """(X' K' Sigma^-1 K X)^-1 without forming Sigma^-1.

    Uses (X'WX)^-1 + (X'WX)^-1 C (X'WX)^-1 where C pushes the low-rank
    correction through the W-weighted projection complement. The result is
    checked against direct dense inversion before being returned.
    """
    wmat = np.diag(d.w.astype(float))
    zmat = d.z_matrix()
    xtwx = d.X.T @ wmat @ d.X
    xtwx_inv = np.linalg.inv(xtwx)
    proj = np.eye(d.n) - d.X @ xtwx_inv @ d.X.T @ wmat
    lam_inv = np.linalg.inv(d.lam.entries)
    core = np.kron(np.eye(d.n), lam_inv) + zmat @ wmat @ proj @ zmat.T
    c_mat = d.X.T @ wmat @ zmat.T @ np.linalg.solve(core, zmat @ wmat @ d.X)
    result = xtwx_inv + xtwx_inv @ c_mat @ xtwx_inv

    ops = sigma_kron_ops(d)
    kmat = d.k_matrix()
    direct = np.linalg.inv(d.X.T @ kmat.T @ ops.inverse @ kmat @ d.X)
    gap = float(np.max(np.abs(result - direct)) / max(np.max(np.abs(direct)), 1e-300))
    if gap > check_tol:
        raise BayesmmError(
            f"beta-covariance identity check failed: relative gap {gap:.3e}"
        )
    return result


def _random_design(gen: np.random.Generator, balanced: bool = False) -> GeneralDesign:
    n = int(gen.integers(3, 7))
    q = int(gen.integers(1, 3))
    p = int(gen.integers(1, min(4, n + 1)))
    w = (
        np.full(n, int(gen.integers(2, 5)))
        if balanced
        else gen.integers(1, 5, size=n)
    )
    z = gen.normal(size=(n, q))
    X = gen.normal(size=(n, p))
    X[:, 0] = 1.0
    a = gen.normal(size=(q, q))
    lam = SpdMatrix(a @ a.T + 0.3 * np.eye(q))
    return GeneralDesign(
        w=w,
        z=z,
        X=X,
        lam=lam,
        sigma2=float(gen.uniform(0.3, 3.0)),
        beta=gen.normal(size=p),
    )


def identity_report(trials: int = 50, seed: int = 0) -> Dict[str, float]:
    """Worst-case gaps over randomized small designs, for the self-check.

    Keys: inverse, logdet, decomposition, centering, projection,
    beta_covariance, balanced_reduction. All should be at round-off level.
    """
    gen = RngStream(seed, 0).generator()
    worst = {
        "inverse": 0.0,
        "logdet": 0.0,
        "decomposition": 0.0,
        "centering": 0.0,
        "projection": 0.0,
        "beta_covariance": 0.0,
        "balanced_reduction": 0.0,
    }
    for trial in range(trials):
        d = _random_design(gen)
        ops = sigma_kron_ops(d)
        worst["inverse"] = max(worst["inverse"], ops.inverse_gap)
        worst["logdet"] = max(worst["logdet"], ops.logdet_gap)

        y = gen.normal(size=d.total)
        dec = verify_quadratic_decomposition(d, y)
        worst["decomposition"] = max(worst["decomposition"], dec.max_rel_gap)
        worst["centering"] = max(worst["centering"], dec.centering_cross_term)
        worst["projection"] = max(worst["projection"], dec.projection_cross_term)

        kmat = d.k_matrix()
        direct = np.linalg.inv(d.X.T @ kmat.T @ ops.inverse @ kmat @ d.X)
        wb = woodbury_beta_covariance(d)
        worst["beta_covariance"] = max(
            worst["beta_covariance"],
            float(np.max(np.abs(wb - direct)) / np.max(np.abs(direct))),
        )

        # balanced scalar reduction: K' Sigma^-1 K = (1 - delta) w I_n
        db = _random_design(gen, balanced=True)
        if db.q == 1:
            w_scalar = int(db.w[0])
            lam_val = float(db.lam.entries[0, 0])
            zsq = db.z[:, 0] ** 2
            ops_b = sigma_kron_ops(db)
            a_mat = db.k_matrix().T @ ops_b.inverse @ db.k_matrix()
            expected = np.diag(w_scalar / (1.0 + lam_val * zsq * w_scalar))
            gap = float(np.max(np.abs(a_mat - expected)) / w_scalar)
            worst["balanced_reduction"] = max(worst["balanced_reduction"], gap)
    return worst


def balanced_scalar_design(
    n: int, w: int, X: np.ndarray, sigma2: float, sigma_u2: float, beta: np.ndarray
) -> GeneralDesign:
    """The balanced single-random-intercept model expressed as a general
    design: equal group sizes, z_i = 1, Lambda = sigma_u^2 / sigma^2."""
    if sigma_u2 <= 0.0:
        raise DomainError("sigma_u2 must be positive to form Lambda")
    return GeneralDesign(
        w=np.full(n, w, dtype=int),
        z=np.ones((n, 1)),
        X=X,
        lam=SpdMatrix(np.array([[sigma_u2 / sigma2]])),
        sigma2=sigma2,
        beta=beta,
    )
