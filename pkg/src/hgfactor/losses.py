"""Prediction and contrastive objectives.

Total objective = multi-horizon MSE + gamma * InfoNCE over the past/future
individual-residual embeddings of the same cross-section.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .network import ForwardOut, ModelConfig, ModelParams

COSINE_NORM_FLOOR = 1e-12


@dataclass
class LossBreakdown:
    total: Tensor
    mse: float
    cl: float
    per_horizon_mse: np.ndarray


def projection_head(e: Tensor, params: ModelParams, slope: float = 0.01) -> Tensor:
    """linear -> LeakyReLU -> linear."""
    hidden = ad.leaky_relu(e @ params["proj.w1"] + params["proj.b1"], slope)
    return hidden @ params["proj.w2"] + params["proj.b2"]


def _row_normalize(e: Tensor) -> Tensor:
    norms = ad.clip_min(ad.sqrt(ad.tsum(e * e, axis=1, keepdims=True)),
                        COSINE_NORM_FLOOR)
    return e / norms


def infonce_loss(e_alpha: Tensor, e_alpha_future: Tensor, params: ModelParams,
                 tau: float, slope: float = 0.01) -> Tensor:
    """Softmax classification of each stock's future view among all stocks.

    Cosine similarities of projected embeddings at temperature tau, with
    log-sum-exp stabilization (raw exponentials overflow at small tau).
    """
    n = e_alpha.shape[0]
    if n < 2:
        raise ValueError("contrastive loss needs at least 2 stocks (negatives)")
    if tau <= 0:
        raise ValueError("tau must be > 0")
    p_past = _row_normalize(projection_head(e_alpha, params, slope))
    p_future = _row_normalize(projection_head(e_alpha_future, params, slope))
    logits = (p_past @ ad.transpose(p_future)) * Tensor(1.0 / tau)   # (N, N)
    shift = np.max(logits.values, axis=1, keepdims=True)             # constant shift
    lse = ad.log(ad.tsum(ad.exp(logits - Tensor(shift)), axis=1, keepdims=True)) + Tensor(shift)
    positives = ad.tsum(logits * Tensor(np.eye(n)), axis=1, keepdims=True)
    return ad.mean(lse - positives)


def mse_loss(pred: Tensor, labels: np.ndarray) -> tuple[Tensor, np.ndarray]:
    """Mean over N*L squared errors, plus the per-horizon means."""
    if pred.shape != labels.shape:
        raise ValueError(f"prediction shape {pred.shape} != label shape {labels.shape}")
    err = pred - Tensor(labels)
    loss = ad.mean(err * err)
    per_horizon = ((pred.values - labels) ** 2).mean(axis=0)
    return loss, per_horizon


def total_loss(out: ForwardOut, e_alpha_future: Tensor | None, labels: np.ndarray,
               params: ModelParams, config: ModelConfig) -> LossBreakdown:
    """MSE + gamma * contrastive; gamma = 0 disables the contrastive term exactly."""
    mse, per_horizon = mse_loss(out.pred, labels)
    gamma = config.effective_gamma
    if gamma > 0.0:
        if e_alpha_future is None:
            raise ValueError("contrastive term requires the future pass output")
        cl = infonce_loss(out.e_alpha, e_alpha_future, params, config.tau,
                          config.leaky_slope)
        total = mse + Tensor(gamma) * cl
        cl_val = float(cl.values)
    else:
        total = mse
        cl_val = 0.0
    return LossBreakdown(total, float(mse.values), cl_val, per_horizon)
