"""Tests for the model evidence and empirical-Bayes tuning.

The evidence is checked against a tensor-product Gauss-Legendre integration
of prior times likelihood over (delta, 1/sigma2, beta) on a tiny instance,
and the optimizer against uniform random probes of the search box.
"""

import math
import types

import numpy as np
import pytest
import scipy.stats as st

from bayesmm import evidence
from bayesmm.balanced_model import (
    BalancedDataset,
    ModelParams,
    PriorHyper,
    marginal_log_likelihood,
    posterior,
    prior_log_pdf,
    suff_stats,
)
from bayesmm.errors import ConvergenceError, DomainError
from bayesmm.evidence import EbConfig, empirical_bayes, evidence_identity_gap, log_evidence
from bayesmm.numkernel import SpdMatrix

from conftest import random_dataset


def quadrature_log_evidence(d, h, n_delta=48, n_tau=72, n_beta=24):
    """Brute-force ln integral of prior x likelihood for p = 1.

    Gauss-Legendre in delta and tau = 1/sigma2; the beta axis is integrated
    on a Gauss-Legendre rule centered at the conditional Gaussian center
    with a +-10 standard deviation window recomputed from the raw data.
    """
    s = suff_stats(d)
    nmn = float(d.n * s.mn.entries[0, 0])
    up0 = float(h.nu3 * s.mn.entries[0, 0]) if h.nu3 is not None else float(h.upsilon0.entries[0, 0])
    center = (nmn * s.beta_ols[0] + up0 * h.beta0[0]) / (nmn + up0)

    t1, w1 = np.polynomial.legendre.leggauss(n_delta)
    deltas = 0.5 * (t1 + 1.0)
    w1 = 0.5 * w1
    rate_floor = h.nu2 / h.mu2 + 0.5 * s.q1
    shape_cap = d.n * d.w / 2.0 + h.nu2 + 1.0
    hi_tau = float(st.gamma.ppf(1.0 - 1e-13, shape_cap, scale=1.0 / rate_floor))
    t2, w2 = np.polynomial.legendre.leggauss(n_tau)
    taus = 0.5 * hi_tau * (t2 + 1.0)
    w2 = 0.5 * hi_tau * w2
    t3, w3 = np.polynomial.legendre.leggauss(n_beta)

    total = 0.0
    for a, wa in zip(deltas, w1):
        for tau, wb in zip(taus, w2):
            sd = 1.0 / math.sqrt(tau * d.w * (1.0 - a) * (nmn + up0))
            betas = center + 10.0 * sd * t3
            vals = np.array(
                [
                    prior_log_pdf(h, ModelParams(float(a), 1.0 / tau, np.array([b]), d.w), s)
                    + marginal_log_likelihood(
                        s, ModelParams(float(a), 1.0 / tau, np.array([b]), d.w)
                    )
                    for b in betas
                ]
            )
            total += wa * wb * 10.0 * sd * float(np.dot(w3, np.exp(vals)))
    return math.log(total)


def tiny_instance(seed=11):
    gen = np.random.default_rng(seed)
    X = np.ones((3, 1))
    y = (X @ [0.7] + 0.6 * gen.standard_normal(3))[:, None] + gen.standard_normal((3, 2))
    return BalancedDataset(y=y, X=X)


class TestLogEvidence:
    def test_zellner_and_general_paths_agree(self, gen):
        for _ in range(20):
            d = random_dataset(gen)
            s = suff_stats(d)
            nu3 = float(gen.uniform(0.2, 20.0))
            beta0 = gen.standard_normal(d.p)
            shared = dict(
                mu1=float(gen.uniform(0.2, 0.8)),
                nu1=float(gen.uniform(0.5, 8.0)),
                mu2=float(gen.uniform(0.3, 3.0)),
                nu2=float(gen.uniform(0.5, 8.0)),
                beta0=beta0,
            )
            hz = PriorHyper(**shared, nu3=nu3)
            hx = PriorHyper(**shared, upsilon0=SpdMatrix(nu3 * s.mn.entries))
            a, b = log_evidence(s, hz), log_evidence(s, hx)
            assert a == pytest.approx(b, rel=1e-9, abs=1e-9)

    def test_quadrature_oracle_tiny_instance(self):
        d = tiny_instance()
        h = PriorHyper(mu1=0.5, nu1=4.0, mu2=1.5, nu2=2.0, beta0=np.array([0.3]), nu3=3.0)
        want = quadrature_log_evidence(d, h)
        got = log_evidence(suff_stats(d), h)
        assert got == pytest.approx(want, rel=1e-3)
        assert abs(got - want) < 1e-4

    def test_identity_gap(self, gen):
        for _ in range(5):
            d = random_dataset(gen)
            s = suff_stats(d)
            h = PriorHyper(
                mu1=0.4, nu1=3.0, mu2=1.0, nu2=2.0,
                beta0=gen.standard_normal(d.p), nu3=float(gen.uniform(0.5, 5.0)),
            )
            assert evidence_identity_gap(s, h) < 1e-8

    def test_finite_on_default_box(self, gen):
        import itertools

        d = random_dataset(gen)
        s = suff_stats(d)
        for nu1, nu2, nu3 in itertools.product([1e-3, 1e6], repeat=3):
            h = PriorHyper(
                mu1=0.5, nu1=nu1, mu2=1.0, nu2=nu2, beta0=np.zeros(d.p), nu3=nu3
            )
            assert math.isfinite(log_evidence(s, h))

    def test_finite_under_kappa_ratio_stress(self):
        # wide between-group spread and a tiny prior rate push kappa2/kappa1
        # toward 1; the hypergeometric term must stay finite
        y = np.array([[0.0, 0.1], [50.0, 50.1], [-50.0, -49.9], [100.0, 100.1]])
        d = BalancedDataset(y=y, X=np.ones((4, 1)))
        s = suff_stats(d)
        h = PriorHyper(mu1=0.5, nu1=2.0, mu2=1e3, nu2=1e-3, beta0=np.zeros(1), nu3=1e-3)
        post = posterior(s, h)
        assert post.bgn.kappa2 / post.bgn.kappa1 > 0.99
        assert math.isfinite(log_evidence(s, h))

    def test_nu3_direction_with_centered_prior(self, gen):
        d = random_dataset(gen)
        s = suff_stats(d)
        vals = []
        for nu3 in (0.1, 1.0, 10.0, 100.0, 1000.0):
            h = PriorHyper(
                mu1=0.5, nu1=3.0, mu2=1.0, nu2=2.0, beta0=s.beta_ols.copy(), nu3=nu3
            )
            vals.append(log_evidence(s, h))
        assert all(b > a for a, b in zip(vals, vals[1:]))


class TestEbConfig:
    def test_validation(self):
        with pytest.raises(DomainError):
            EbConfig(nu1_bounds=(0.0, 1.0))
        with pytest.raises(DomainError):
            EbConfig(nu2_bounds=(2.0, 1.0))
        with pytest.raises(DomainError):
            EbConfig(mu1=1.5)
        with pytest.raises(DomainError):
            EbConfig(restarts=0)
        with pytest.raises(DomainError):
            EbConfig(tol=0.0)


class TestEmpiricalBayes:
    def test_determinism(self, gen):
        d = random_dataset(gen)
        s = suff_stats(d)
        cfg = EbConfig(seed=4)
        h1 = empirical_bayes(s, cfg)
        h2 = empirical_bayes(s, cfg)
        assert (h1.nu1, h1.nu2, h1.nu3) == (h2.nu1, h2.nu2, h2.nu3)

    def test_nu1_box_respected(self, gen):
        d = random_dataset(gen)
        s = suff_stats(d)
        h = empirical_bayes(s, EbConfig(nu1_bounds=(2.0, 2.001)))
        assert 2.0 <= h.nu1 <= 2.001

    def test_beats_random_probes(self, gen):
        d = random_dataset(gen, n=8, w=3, p=2)
        s = suff_stats(d)
        cfg = EbConfig(seed=1)
        h = empirical_bayes(s, cfg)
        best = log_evidence(s, h)
        lo = np.log([cfg.nu1_bounds[0], cfg.nu2_bounds[0], cfg.nu3_bounds[0]])
        hi = np.log([cfg.nu1_bounds[1], cfg.nu2_bounds[1], cfg.nu3_bounds[1]])
        probe_gen = np.random.default_rng(99)
        for _ in range(100):
            nu1, nu2, nu3 = np.exp(lo + (hi - lo) * probe_gen.uniform(size=3))
            hp = PriorHyper(
                mu1=cfg.mu1, nu1=nu1, mu2=cfg.mu2, nu2=nu2,
                beta0=np.zeros(2), nu3=nu3,
            )
            assert log_evidence(s, hp) <= best + 1e-7

    def test_passthrough_fields(self, gen):
        d = random_dataset(gen, p=2)
        s = suff_stats(d)
        b0 = np.array([0.5, -0.5])
        h = empirical_bayes(s, EbConfig(mu1=0.3, mu2=2.0, beta0=b0))
        assert h.mu1 == 0.3 and h.mu2 == 2.0
        np.testing.assert_array_equal(h.beta0, b0)

    def test_nonconvergence_reports_best(self, gen, monkeypatch):
        d = random_dataset(gen)
        s = suff_stats(d)

        def fake_minimize(fun, x0, **kwargs):
            return types.SimpleNamespace(success=False, x=np.asarray(x0), fun=fun(np.asarray(x0)))

        monkeypatch.setattr(evidence.optimize, "minimize", fake_minimize)
        with pytest.raises(ConvergenceError, match="best point found"):
            empirical_bayes(s, EbConfig(restarts=2))
