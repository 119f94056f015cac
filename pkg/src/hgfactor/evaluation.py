"""Prediction scoring, ablation harness, and the hidden-factor-count sweep."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .data import MarketPanel, PriorExposure
from .metrics import MetricReport, build_report, daily_ic, daily_rank_ic
from .network import ModelConfig, VARIANTS
from .training import TrainConfig, train_window, predict_range, usable_anchors


def evaluate_predictions(predictions: dict, panel: MarketPanel, labels: np.ndarray,
                         horizons, tag: str = "full") -> MetricReport:
    """Daily IC/rank-IC per horizon for a {date: (tickers, scores)} mapping.

    Dates whose labels are entirely missing contribute flagged-undefined days.
    """
    dates = sorted(predictions)
    s_idx = {s: i for i, s in enumerate(panel.stocks)}
    ell = len(horizons)
    daily = np.full((len(dates), ell), np.nan)
    daily_rank = np.full((len(dates), ell), np.nan)
    for di, d in enumerate(dates):
        tickers, scores = predictions[d]
        row = panel.date_index(d)
        cols = np.array([s_idx[t] for t in tickers])
        for li in range(ell):
            lab = labels[row, cols, li]
            daily[di, li] = daily_ic(scores[:, li], lab)
            daily_rank[di, li] = daily_rank_ic(scores[:, li], lab)
    return build_report(daily, horizons, tag=tag, daily_rank=daily_rank)


def ablation_run(variant: str, panel: MarketPanel, prior: PriorExposure,
                 labels: np.ndarray, train_range, valid_range, test_range,
                 model_cfg: ModelConfig, train_cfg: TrainConfig) -> MetricReport:
    """Train and score one model variant; identical seeds and data across variants."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    cfg = replace(model_cfg, variant=variant)
    params, _ = train_window(panel, prior, labels, train_range, valid_range,
                             cfg, train_cfg)
    anchors = usable_anchors(panel, test_range, cfg, within_range=False)
    preds = predict_range(panel, prior, params, cfg, anchors)
    return evaluate_predictions(preds, panel, labels, cfg.horizons, tag=variant)


def ablation_matrix(panel, prior, labels, train_range, valid_range, test_range,
                    model_cfg, train_cfg, variants=VARIANTS) -> list[MetricReport]:
    return [ablation_run(v, panel, prior, labels, train_range, valid_range,
                         test_range, model_cfg, train_cfg) for v in variants]


def sweep_hidden(grid, panel, prior, labels, train_range, valid_range, test_range,
                 model_cfg: ModelConfig, train_cfg: TrainConfig) -> list[tuple[int, MetricReport]]:
    """Retrain across a grid of hidden-factor counts; everything else fixed."""
    out = []
    for m in grid:
        cfg = replace(model_cfg, n_hidden_factors=int(m))
        params, _ = train_window(panel, prior, labels, train_range, valid_range,
                                 cfg, train_cfg)
        anchors = usable_anchors(panel, test_range, cfg, within_range=False)
        preds = predict_range(panel, prior, params, cfg, anchors)
        out.append((int(m), evaluate_predictions(preds, panel, labels, cfg.horizons,
                                                 tag=f"M={m}")))
    return out
