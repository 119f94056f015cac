import numpy as np
import pytest

from hgfactor.synthetic import SynthSpec, generate_market


@pytest.fixture(scope="module")
def market():
    spec = SynthSpec(n_stocks=50, n_prior=5, n_hidden_true=3, days=600, seed=42)
    return generate_market(spec)


class TestGenerateMarket:
    def test_same_seed_bit_identical(self):
        spec = SynthSpec(n_stocks=10, n_prior=2, n_hidden_true=1, days=50, seed=9)
        p1, e1, t1 = generate_market(spec)
        p2, e2, t2 = generate_market(spec)
        np.testing.assert_array_equal(p1.values, p2.values)
        np.testing.assert_array_equal(t1.factor_returns, t2.factor_returns)
        np.testing.assert_array_equal(e1.matrix, e2.matrix)

    def test_different_seed_differs(self):
        p1, _, _ = generate_market(SynthSpec(n_stocks=10, days=50, seed=1))
        p2, _, _ = generate_market(SynthSpec(n_stocks=10, days=50, seed=2))
        assert not np.array_equal(p1.values, p2.values)

    def test_reconstruction_identity(self, market):
        panel, _, truth = market
        close = panel.field("close")
        prev = np.vstack([np.full((1, panel.n_stocks), 100.0), close[:-1]])
        realized = close / prev - 1.0
        np.testing.assert_allclose(realized, truth.stock_returns, atol=1e-10)
        decomposed = (truth.factor_returns
                      @ np.hstack([truth.prior_loadings, truth.hidden_loadings]).T
                      + truth.idio_returns)
        np.testing.assert_allclose(decomposed, truth.stock_returns, atol=1e-12)

    def test_ohlc_consistency(self, market):
        panel, _, _ = market
        o, h = panel.field("open"), panel.field("high")
        l, c = panel.field("low"), panel.field("close")
        assert (l <= np.minimum(o, c) + 1e-12).all()
        assert (np.maximum(o, c) <= h + 1e-12).all()
        assert (l > 0).all()

    def test_vwap_equals_close(self, market):
        panel, _, _ = market
        np.testing.assert_array_equal(panel.field("vwap"), panel.field("close"))

    def test_single_membership_prior(self, market):
        _, exposure, _ = market
        assert ((exposure.matrix == 0) | (exposure.matrix == 1)).all()
        np.testing.assert_array_equal(exposure.matrix.sum(axis=1), 1.0)

    def test_hidden_loadings_in_unit_interval(self, market):
        _, _, truth = market
        assert ((truth.hidden_loadings >= 0) & (truth.hidden_loadings <= 1)).all()

    def test_degenerate_single_factor(self):
        spec = SynthSpec(n_stocks=8, n_prior=2, n_hidden_true=0, days=40,
                         idio_vol=1e-300, seed=3)
        panel, exposure, truth = spec, None, None
        panel, exposure, truth = generate_market(spec)
        close = panel.field("close")
        industry = exposure.matrix.argmax(axis=1)
        for k in range(2):
            members = np.flatnonzero(industry == k)
            if len(members) > 1:
                ref = close[:, members[0]]
                for m in members[1:]:
                    np.testing.assert_allclose(close[:, m], ref, rtol=1e-9)

    def test_invalid_spec_rejected(self):
        with pytest.raises(ValueError):
            SynthSpec(n_stocks=2).validate()
        with pytest.raises(ValueError):
            SynthSpec(persistence=1.0).validate()
        with pytest.raises(ValueError):
            SynthSpec(factor_vol=0.0).validate()


class TestFactorStructureRecovery:
    def test_regression_recovers_factor_paths(self):
        # cross-sectional least squares with the true loadings should track
        # every factor path closely when N is large relative to idio noise
        spec = SynthSpec(n_stocks=50, n_prior=5, n_hidden_true=3, days=2520, seed=0)
        panel, _, truth = generate_market(spec)
        load = np.hstack([truth.prior_loadings, truth.hidden_loadings])
        z_hat, *_ = np.linalg.lstsq(load, truth.stock_returns.T, rcond=None)
        z_hat = z_hat.T
        for j in range(load.shape[1]):
            corr = np.corrcoef(z_hat[:, j], truth.factor_returns[:, j])[0, 1]
            assert corr > 0.9, (j, corr)

    def test_prior_residual_pcs_align_with_hidden_loadings(self):
        # with small idio noise the residual covariance's top PCs span B*
        spec = SynthSpec(n_stocks=60, n_prior=4, n_hidden_true=3, days=2000,
                         factor_vol=0.02, idio_vol=0.002, seed=5)
        _, _, truth = generate_market(spec)
        prior = truth.prior_loadings
        r = truth.stock_returns
        z_p, *_ = np.linalg.lstsq(prior, r.T, rcond=None)
        resid = r - z_p.T @ prior.T                     # (days, N)
        _, _, vt = np.linalg.svd(resid - resid.mean(0), full_matrices=False)
        pcs = vt[:3].T                                  # (N, 3)
        # canonical correlation between span(pcs) and span(B*)
        qa, _ = np.linalg.qr(pcs - pcs.mean(0))
        qb, _ = np.linalg.qr(truth.hidden_loadings - truth.hidden_loadings.mean(0))
        cancorr = np.linalg.svd(qa.T @ qb, compute_uv=False)
        assert cancorr[0] > 0.9
