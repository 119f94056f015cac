"""scikit-learn style front end for the hypergraph factor model.

Wraps window construction, training and prediction behind fit/predict with
get_params/set_params, so the model composes with the wider ecosystem
(grid search over hyperparameters, cloning, pipelines that pass panels).
"""

from __future__ import annotations

import datetime as dt

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .data import MarketPanel, PriorExposure, compute_labels
from .metrics import daily_ic
from .network import ModelConfig
from .training import TrainConfig, train_window, predict_range, prediction_anchors


def _check_panel(panel):
    if not isinstance(panel, MarketPanel):
        raise TypeError(f"expected a MarketPanel, got {type(panel).__name__}")
    if panel.n_stocks < 2:
        raise ValueError("panel needs at least 2 stocks")
    return panel


def _check_prior(prior, panel):
    if not isinstance(prior, PriorExposure):
        raise TypeError(f"expected a PriorExposure, got {type(prior).__name__}")
    if prior.matrix.shape[0] != panel.n_stocks:
        raise ValueError(
            f"prior exposure rows ({prior.matrix.shape[0]}) != panel stocks ({panel.n_stocks})")
    if not np.isin(prior.matrix, (0.0, 1.0)).all():
        raise ValueError("prior exposures must be binary")
    return prior


def _check_range(rng, name):
    lo, hi = rng
    if not (isinstance(lo, dt.date) and isinstance(hi, dt.date) and lo < hi):
        raise ValueError(f"{name} must be an increasing (start, end) date pair")
    return (lo, hi)


class HypergraphFactorRegressor(BaseEstimator):
    """Cross-sectional return predictor with prior + mined hidden factors.

    Parameters mirror the model and training configuration; ``fit`` trains on
    one (train, valid) date split and ``predict`` scores anchor dates in eval
    mode. ``score`` returns the mean daily IC over the scored dates.
    """

    def __init__(self, embed_dim=64, n_hidden_factors=32, horizons=(1, 5, 10, 20),
                 past_window=60, future_window=20, leaky_slope=0.01, tau=0.1,
                 gamma=0.1, variant="full", lr=2e-4, max_epochs=20, patience=5,
                 grad_clip=3.0, days_per_epoch=None, valid_max_days=60, seed=0):
        self.embed_dim = embed_dim
        self.n_hidden_factors = n_hidden_factors
        self.horizons = horizons
        self.past_window = past_window
        self.future_window = future_window
        self.leaky_slope = leaky_slope
        self.tau = tau
        self.gamma = gamma
        self.variant = variant
        self.lr = lr
        self.max_epochs = max_epochs
        self.patience = patience
        self.grad_clip = grad_clip
        self.days_per_epoch = days_per_epoch
        self.valid_max_days = valid_max_days
        self.seed = seed

    def _configs(self):
        model_cfg = ModelConfig(
            embed_dim=self.embed_dim, n_hidden_factors=self.n_hidden_factors,
            horizons=tuple(self.horizons), past_window=self.past_window,
            future_window=self.future_window, leaky_slope=self.leaky_slope,
            tau=self.tau, gamma=self.gamma, variant=self.variant, seed=self.seed)
        train_cfg = TrainConfig(
            lr=self.lr, max_epochs=self.max_epochs, patience=self.patience,
            grad_clip=self.grad_clip, days_per_epoch=self.days_per_epoch,
            valid_max_days=self.valid_max_days, seed=self.seed)
        return model_cfg, train_cfg

    def fit(self, panel, prior, train_range, valid_range, labels=None):
        panel = _check_panel(panel)
        prior = _check_prior(prior, panel)
        model_cfg, train_cfg = self._configs()
        if labels is None:
            labels = compute_labels(panel, model_cfg.horizons)
        self.params_, self.train_log_ = train_window(
            panel, prior, labels,
            _check_range(train_range, "train_range"),
            _check_range(valid_range, "valid_range"),
            model_cfg, train_cfg)
        self.model_config_ = model_cfg
        return self

    def _require_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("call fit before predict/score")

    def predict(self, panel, prior, dates):
        """Scores per anchor date: {date: (tickers, (n, L) array)}."""
        self._require_fitted()
        panel = _check_panel(panel)
        prior = _check_prior(prior, panel)
        return predict_range(panel, prior, self.params_, self.model_config_, dates)

    def predict_dates(self, panel, date_range):
        """Anchor dates in date_range with enough history to score."""
        self._require_fitted()
        return prediction_anchors(panel, _check_range(date_range, "date_range"),
                                  self.model_config_)

    def score(self, panel, prior, dates, labels=None, horizon_index=0):
        """Mean daily IC at one horizon over the given anchor dates."""
        self._require_fitted()
        if labels is None:
            labels = compute_labels(panel, self.model_config_.horizons)
        preds = self.predict(panel, prior, dates)
        s_idx = {s: i for i, s in enumerate(panel.stocks)}
        ics = []
        for d, (tickers, scores) in preds.items():
            di = panel.date_index(d)
            lab = np.array([labels[di, s_idx[t], horizon_index] for t in tickers])
            ics.append(daily_ic(scores[:, horizon_index], lab))
        ics = np.asarray(ics)
        return float(np.nanmean(ics)) if np.isfinite(ics).any() else float("nan")
