import datetime as dt

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from hgfactor import HypergraphFactorRegressor
from hgfactor.data import PriorExposure
from hgfactor.synthetic import SynthSpec, generate_market

SMALL = dict(embed_dim=6, n_hidden_factors=3, horizons=(1, 2), past_window=8,
             future_window=5, gamma=0.2, lr=1e-3, max_epochs=2, patience=2,
             days_per_epoch=10, valid_max_days=5, seed=0)


@pytest.fixture(scope="module")
def market():
    spec = SynthSpec(n_stocks=10, n_prior=2, n_hidden_true=1, days=200,
                     persistence=0.5, seed=12)
    return generate_market(spec)


def splits(panel):
    return ((panel.dates[0], panel.dates[110]),
            (panel.dates[110], panel.dates[150]),
            (panel.dates[150], panel.dates[-1] + dt.timedelta(days=1)))


@pytest.fixture(scope="module")
def fitted(market):
    panel, prior, _ = market
    train, valid, _ = splits(panel)
    est = HypergraphFactorRegressor(**SMALL)
    return est.fit(panel, prior, train, valid)


class TestSklearnContract:
    def test_get_params_round_trip(self):
        est = HypergraphFactorRegressor(**SMALL)
        params = est.get_params()
        assert params["embed_dim"] == 6 and params["gamma"] == 0.2
        est2 = HypergraphFactorRegressor().set_params(**params)
        assert est2.get_params() == params

    def test_clone_drops_fitted_state(self, fitted):
        fresh = clone(fitted)
        assert not hasattr(fresh, "params_")
        assert fresh.get_params() == fitted.get_params()

    def test_unfitted_predict_raises(self, market):
        panel, prior, _ = market
        est = HypergraphFactorRegressor(**SMALL)
        with pytest.raises(NotFittedError):
            est.predict(panel, prior, [panel.dates[-1]])


class TestFitPredict:
    def test_predict_shapes(self, market, fitted):
        panel, prior, _ = market
        _, _, test = splits(panel)
        dates = fitted.predict_dates(panel, test)
        preds = fitted.predict(panel, prior, dates)
        assert sorted(preds) == sorted(dates)
        tickers, scores = preds[dates[0]]
        assert scores.shape == (len(tickers), 2)
        assert np.isfinite(scores).all()

    def test_score_returns_finite_ic(self, market, fitted):
        panel, prior, _ = market
        _, _, test = splits(panel)
        dates = [d for d in fitted.predict_dates(panel, test)
                 if panel.date_index(d) + 3 < panel.n_dates]
        value = fitted.score(panel, prior, dates)
        assert np.isfinite(value) and -1.0 <= value <= 1.0

    def test_fit_is_deterministic(self, market):
        panel, prior, _ = market
        train, valid, test = splits(panel)
        outs = []
        for _ in range(2):
            est = HypergraphFactorRegressor(**SMALL).fit(panel, prior, train, valid)
            d = est.predict_dates(panel, test)[:3]
            preds = est.predict(panel, prior, d)
            outs.append(np.vstack([preds[k][1] for k in sorted(preds)]))
        np.testing.assert_array_equal(outs[0], outs[1])

    def test_variant_parameter_flows_through(self, market):
        panel, prior, _ = market
        train, valid, _ = splits(panel)
        est = HypergraphFactorRegressor(**{**SMALL, "variant": "wo_hidden"})
        est.fit(panel, prior, train, valid)
        assert est.model_config_.variant == "wo_hidden"


class TestValidation:
    def test_rejects_non_panel(self, market):
        _, prior, _ = market
        est = HypergraphFactorRegressor(**SMALL)
        with pytest.raises(TypeError, match="MarketPanel"):
            est.fit(np.zeros((5, 5)), prior,
                    (dt.date(2020, 1, 1), dt.date(2021, 1, 1)),
                    (dt.date(2021, 1, 1), dt.date(2022, 1, 1)))

    def test_rejects_mismatched_prior(self, market):
        panel, _, _ = market
        bad = PriorExposure(["A", "B"], ["F0"], np.ones((2, 1)))
        est = HypergraphFactorRegressor(**SMALL)
        with pytest.raises(ValueError, match="rows"):
            est.fit(panel, bad, (panel.dates[0], panel.dates[50]),
                    (panel.dates[50], panel.dates[80]))

    def test_rejects_non_binary_prior(self, market):
        panel, _, _ = market
        bad = PriorExposure(panel.stocks, ["F0"], np.full((panel.n_stocks, 1), 0.5))
        est = HypergraphFactorRegressor(**SMALL)
        with pytest.raises(ValueError, match="binary"):
            est.fit(panel, bad, (panel.dates[0], panel.dates[50]),
                    (panel.dates[50], panel.dates[80]))

    def test_rejects_reversed_range(self, market):
        panel, prior, _ = market
        est = HypergraphFactorRegressor(**SMALL)
        with pytest.raises(ValueError, match="train_range"):
            est.fit(panel, prior, (panel.dates[50], panel.dates[0]),
                    (panel.dates[50], panel.dates[80]))
