"""IC / ICIR evaluation and hidden-factor recovery scoring.

Daily IC is the Pearson correlation between one day's predictions and its
realized (standardized) returns; rank IC (Spearman) is reported alongside but
never used for model selection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class MetricReport:
    horizons: tuple
    ic: np.ndarray            # per-horizon mean daily IC (NaN when undefined)
    icir: np.ndarray          # per-horizon ICIR (NaN when undefined)
    rank_ic: np.ndarray
    daily_ic: np.ndarray      # (n_days, L) with NaN for excluded days
    n_days: int
    n_excluded: np.ndarray    # per-horizon count of flagged-undefined days
    tag: str = "full"


def daily_ic(pred: np.ndarray, label: np.ndarray) -> float:
    """Pearson correlation over jointly valid stocks; NaN when degenerate."""
    ok = np.isfinite(pred) & np.isfinite(label)
    p, y = pred[ok], label[ok]
    if p.size < 3:
        return float("nan")
    if p.std() == 0.0 or y.std() == 0.0:
        return float("nan")
    return float(np.corrcoef(p, y)[0, 1])


def daily_rank_ic(pred: np.ndarray, label: np.ndarray) -> float:
    ok = np.isfinite(pred) & np.isfinite(label)
    if ok.sum() < 3:
        return float("nan")
    ranks = lambda v: np.argsort(np.argsort(v)).astype(float)
    return daily_ic(ranks(pred[ok]), ranks(label[ok]))


def icir(series) -> float:
    """Mean over sample std of a daily IC series; NaN when undefined."""
    s = np.asarray(series, dtype=float)
    s = s[np.isfinite(s)]
    if s.size < 2:
        return float("nan")
    std = s.std(ddof=1)
    if std == 0.0:
        return float("nan")
    return float(s.mean() / std)


def build_report(daily: np.ndarray, horizons, tag: str = "full",
                 daily_rank: np.ndarray | None = None) -> MetricReport:
    """Aggregate a (n_days, L) daily IC matrix; NaN days are excluded from means."""
    daily = np.asarray(daily, dtype=float)
    ell = daily.shape[1]
    ic = np.full(ell, np.nan)
    ir = np.full(ell, np.nan)
    ric = np.full(ell, np.nan)
    excluded = np.zeros(ell, dtype=int)
    for li in range(ell):
        col = daily[:, li]
        good = col[np.isfinite(col)]
        excluded[li] = col.size - good.size
        if good.size:
            ic[li] = good.mean()
        ir[li] = icir(col)
        if daily_rank is not None:
            rcol = daily_rank[:, li]
            rgood = rcol[np.isfinite(rcol)]
            if rgood.size:
                ric[li] = rgood.mean()
    return MetricReport(tuple(horizons), ic, ir, ric, daily, daily.shape[0],
                        excluded, tag)


def _column_correlations(learned: np.ndarray, true: np.ndarray) -> np.ndarray:
    """|corr| matrix (n_true, n_learned); constant learned columns get -inf."""
    n_true, n_learned = true.shape[1], learned.shape[1]
    out = np.full((n_true, n_learned), -np.inf)
    for i in range(n_true):
        t = true[:, i]
        if t.std() == 0.0:
            continue
        for j in range(n_learned):
            c = learned[:, j]
            if c.std() == 0.0:
                continue
            out[i, j] = abs(np.corrcoef(t, c)[0, 1])
    return out


def hidden_recovery(learned: np.ndarray, true: np.ndarray) -> tuple[float, float]:
    """Score how well learned soft exposures align with ground-truth loadings.

    Returns (max_match, greedy_match): per true column, the best |Pearson|
    over learned columns, averaged; the greedy variant enforces a one-to-one
    assignment. Both are invariant to column permutation and sign.
    """
    if learned.shape[0] != true.shape[0]:
        raise ValueError("stock counts differ")
    if true.shape[1] == 0:
        raise ValueError("no true factor columns to match")
    corr = _column_correlations(learned, true)
    usable = np.where(np.isfinite(corr), corr, np.nan)
    max_score = float(np.nanmax(np.where(np.isfinite(corr), corr, 0.0), axis=1).mean())

    greedy = []
    work = corr.copy()
    for _ in range(min(true.shape[1], learned.shape[1])):
        i, j = np.unravel_index(np.argmax(work), work.shape)
        if not np.isfinite(work[i, j]):
            break
        greedy.append(work[i, j])
        work[i, :] = -np.inf
        work[:, j] = -np.inf
    greedy += [0.0] * (true.shape[1] - len(greedy))
    return max_score, float(np.mean(greedy))


def recovery_null_band(n_stocks: int, n_learned: int, n_true: int,
                       n_perm: int = 1000, seed: int = 0,
                       quantile: float = 0.95) -> float:
    """Permutation-null quantile of the greedy recovery score for pure noise."""
    rng = np.random.default_rng(seed)
    scores = np.empty(n_perm)
    true = rng.beta(2.0, 2.0, size=(n_stocks, n_true))
    for p in range(n_perm):
        noise = rng.standard_normal((n_stocks, n_learned))
        scores[p] = hidden_recovery(noise, true)[1]
    return float(np.quantile(scores, quantile))
