"""Optimization loop, rolling-window protocol, early stopping on validation IC.

One training step consumes one trading day's full cross-section. Validation
selects the epoch with the best mean daily IC (averaged over horizons); the
returned parameters are that best checkpoint, not the last one.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape, Tensor, NonFiniteError
from .data import MarketPanel, PriorExposure, WindowBatch, SplitPlan, \
    build_window_batch, compute_labels, dates_in_range, DataError
from .losses import total_loss
from .metrics import daily_ic
from .network import ModelConfig, ModelParams, forward, forward_future, init_params


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    lr: float = 2e-4
    max_epochs: int = 20
    patience: int = 5
    grad_clip: float = 3.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    days_per_epoch: int | None = None   # None = every usable train day
    valid_max_days: int = 60            # validation days are strided down to this
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_mse: float
    train_cl: float
    valid_ic: list
    mean_valid_ic: float


@dataclass
class TrainLog:
    epochs: list = field(default_factory=list)
    best_epoch: int = -1


class Adam:
    """Adam with global gradient-norm clipping; updates values in place."""

    def __init__(self, params: list[Tensor], config: TrainConfig):
        self.params = params
        self.cfg = config
        self.m = [np.zeros(p.shape) for p in params]
        self.v = [np.zeros(p.shape) for p in params]
        self.t = 0

    def step(self):
        cfg = self.cfg
        grads = [p.grad if p.grad is not None else np.zeros(p.shape)
                 for p in self.params]
        if cfg.grad_clip > 0:
            total = np.sqrt(sum(float((g * g).sum()) for g in grads))
            if total > cfg.grad_clip:
                scale = cfg.grad_clip / total
                grads = [g * scale for g in grads]
        self.t += 1
        bc1 = 1.0 - cfg.beta1 ** self.t
        bc2 = 1.0 - cfg.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            p.values = p.values - cfg.lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_eps)


def _reach(model_cfg: ModelConfig) -> int:
    return max(model_cfg.future_window, max(model_cfg.horizons) + 1)


def usable_anchors(panel: MarketPanel, date_range, model_cfg: ModelConfig,
                   within_range: bool = True) -> list[dt.date]:
    """Anchor dates whose past window, future window and labels all exist and,
    when within_range is set, never touch data past the range end."""
    reach = _reach(model_cfg)
    t_len = model_cfg.past_window
    out = []
    for d in dates_in_range(panel.dates, date_range):
        idx = panel.date_index(d)
        if idx - t_len + 1 < 0 or idx + reach >= panel.n_dates:
            continue
        if within_range and panel.dates[idx + reach] >= date_range[1]:
            continue
        out.append(d)
    return out


def _train_batch(panel, labels, prior, anchor, model_cfg) -> WindowBatch:
    batch = build_window_batch(panel, labels, prior, anchor,
                               model_cfg.past_window, model_cfg.future_window)
    idx = panel.date_index(anchor)
    panel.note_access(idx + 1, idx + _reach(model_cfg))
    return batch


def validate_epoch(panel: MarketPanel, labels: np.ndarray, prior: PriorExposure,
                   anchors, params: ModelParams, model_cfg: ModelConfig) -> np.ndarray:
    """Eval-mode mean daily IC per horizon over the given anchor dates."""
    if not anchors:
        raise TrainingError("validation requires at least one usable day")
    daily = np.full((len(anchors), model_cfg.n_horizons), np.nan)
    for di, anchor in enumerate(anchors):
        batch = build_window_batch(panel, labels, prior, anchor,
                                   model_cfg.past_window, model_cfg.future_window)
        out = forward(batch.x, batch.prior, params, model_cfg, training=False)
        for li in range(model_cfg.n_horizons):
            daily[di, li] = daily_ic(out.pred.values[:, li], batch.labels[:, li])
    return np.array([np.nanmean(daily[:, li]) if np.isfinite(daily[:, li]).any()
                     else np.nan for li in range(model_cfg.n_horizons)])


def _stride(seq, max_len):
    if len(seq) <= max_len:
        return list(seq)
    step = int(np.ceil(len(seq) / max_len))
    return list(seq[::step])


def train_window(panel: MarketPanel, prior: PriorExposure, labels: np.ndarray,
                 train_range, valid_range, model_cfg: ModelConfig,
                 train_cfg: TrainConfig) -> tuple[ModelParams, TrainLog]:
    """Train one rolling window; returns the best-validation parameters."""
    train_anchors = usable_anchors(panel, train_range, model_cfg)
    valid_anchors = _stride(usable_anchors(panel, valid_range, model_cfg),
                            train_cfg.valid_max_days)
    if not train_anchors or not valid_anchors:
        raise TrainingError(
            f"no usable anchors (train={len(train_anchors)}, valid={len(valid_anchors)}) "
            f"for ranges {train_range} / {valid_range}")

    rng = np.random.default_rng(train_cfg.seed)
    params = init_params(model_cfg, np.random.default_rng(model_cfg.seed))
    opt = Adam(params.trainable(), train_cfg)
    log = TrainLog()
    best_ic = -np.inf
    best_state = params.snapshot()
    bad_epochs = 0
    contrastive = model_cfg.effective_gamma > 0.0

    for epoch in range(train_cfg.max_epochs):
        order = rng.permutation(len(train_anchors))
        if train_cfg.days_per_epoch is not None:
            order = order[:train_cfg.days_per_epoch]
        losses, mses, cls_ = [], [], []
        for oi in order:
            anchor = train_anchors[oi]
            batch = _train_batch(panel, labels, prior, anchor, model_cfg)
            params.zero_grad()
            try:
                with Tape() as tape:
                    out = forward(batch.x, batch.prior, params, model_cfg, training=True)
                    e_af = None
                    if contrastive:
                        e_af = forward_future(batch.x_future, batch.prior, out.beta_h,
                                              params, model_cfg, training=True)
                    breakdown = total_loss(out, e_af, batch.labels, params, model_cfg)
                    tape.backward(breakdown.total)
            except NonFiniteError as exc:
                raise TrainingError(
                    f"divergence at epoch {epoch}, day {anchor}: {exc}") from exc
            opt.step()
            losses.append(float(breakdown.total.values))
            mses.append(breakdown.mse)
            cls_.append(breakdown.cl)

        valid_ic = validate_epoch(panel, labels, prior, valid_anchors, params, model_cfg)
        mean_ic = float(np.nanmean(valid_ic))
        log.epochs.append(EpochRecord(epoch, float(np.mean(losses)), float(np.mean(mses)),
                                      float(np.mean(cls_)), [float(v) for v in valid_ic],
                                      mean_ic))
        if mean_ic > best_ic:
            best_ic = mean_ic
            best_state = params.snapshot()
            log.best_epoch = epoch
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= train_cfg.patience:
                break

    params.restore(best_state)
    return params, log


def predict_range(panel: MarketPanel, prior: PriorExposure, params: ModelParams,
                  model_cfg: ModelConfig, anchors) -> dict:
    """Eval-mode predictions per anchor date: date -> (tickers, (n, L) scores)."""
    out = {}
    for anchor in anchors:
        batch = build_window_batch(panel, None, prior, anchor,
                                   model_cfg.past_window, 0, require_labels=False)
        fwd = forward(batch.x, batch.prior, params, model_cfg, training=False)
        out[anchor] = (batch.stocks, fwd.pred.values.copy())
    return out


def prediction_anchors(panel: MarketPanel, date_range, model_cfg: ModelConfig):
    """Test-range dates with a full past window (no future data needed)."""
    out = []
    for d in dates_in_range(panel.dates, date_range):
        if panel.date_index(d) - model_cfg.past_window + 1 >= 0:
            out.append(d)
    return out


def run_rolling(panel: MarketPanel, prior: PriorExposure, plan: SplitPlan,
                model_cfg: ModelConfig, train_cfg: TrainConfig,
                labels: np.ndarray | None = None):
    """Train one model per rolling triple; concatenate test predictions.

    Returns (predictions, results) where predictions maps each test date to
    (tickers, scores) and results is a list of (params, TrainLog, triple).
    """
    if labels is None:
        labels = compute_labels(panel, model_cfg.horizons)
    predictions: dict = {}
    results = []
    for triple in plan.triples:
        train_range, valid_range, test_range = triple
        params, log = train_window(panel, prior, labels, train_range, valid_range,
                                   model_cfg, train_cfg)
        anchors = prediction_anchors(panel, test_range, model_cfg)
        preds = predict_range(panel, prior, params, model_cfg, anchors)
        overlap = set(preds) & set(predictions)
        if overlap:
            raise TrainingError(f"test ranges overlap on {sorted(overlap)[:3]}...")
        predictions.update(preds)
        results.append((params, log, triple))
    return predictions, results
