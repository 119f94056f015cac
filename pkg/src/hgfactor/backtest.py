"""TopK strategy simulation with staggered tranches and transaction costs.

Capital is split into delta_t equal tranches; tranche d rebalances on signal
days congruent to d (mod delta_t) into the top-k equal-weighted stocks by
that day's score, filled at the next day's vwap. Costs are charged per side
on traded notional. Excess returns are measured against an equal-weight
universe benchmark (or an external series).
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np

from .data import MarketPanel


@dataclass
class BacktestConfig:
    topk: int = 30
    delta_t: int = 10
    cost_rate: float = 0.003
    trading_days_per_year: int = 252
    benchmark: str = "equal_weight_universe"   # or "external"

    def __post_init__(self):
        if self.topk < 1 or self.delta_t < 1:
            raise ValueError("topk and delta_t must be >= 1")
        if self.cost_rate < 0:
            raise ValueError("cost_rate must be >= 0")


@dataclass
class BacktestReport:
    dates: list
    port_ret: np.ndarray
    bench_ret: np.ndarray
    cr: np.ndarray         # cumulative (arithmetic) portfolio return
    cer: np.ndarray        # cumulative excess return vs benchmark
    turnover: np.ndarray   # traded notional / portfolio value, per day
    ar: float
    ir: float
    romad: float
    events: list = field(default_factory=list)


def _select_topk(tickers, scores, k):
    """(score desc, ticker asc) stable ranking."""
    order = sorted(range(len(tickers)), key=lambda i: (-scores[i], tickers[i]))
    return [tickers[i] for i in order[:k]]


def max_drawdown(curve: np.ndarray) -> float:
    """Max peak-to-trough decline of an arithmetic cumulative-return curve."""
    peak = np.maximum.accumulate(curve)
    return float((peak - curve).max())


def report_metrics(excess: np.ndarray, config: BacktestConfig):
    """(AR, IR, RoMaD) of a daily excess-return series."""
    excess = np.asarray(excess, dtype=float)
    if excess.size < 2:
        raise ValueError("need at least 2 days of excess returns")
    tdpy = config.trading_days_per_year
    ar = float(excess.mean() * tdpy)
    std = excess.std(ddof=1)
    ir = float(ar / (std * np.sqrt(tdpy))) if std > 0 else float("nan")
    cer = np.cumsum(excess)
    dd = max_drawdown(np.concatenate([[0.0], cer]))
    romad = float(cer[-1] / dd) if dd > 0 else float("nan")
    return ar, ir, romad


def run_topk(predictions: dict, panel: MarketPanel, config: BacktestConfig,
             horizon_index: int = 0,
             benchmark_series: dict | None = None) -> BacktestReport:
    """Simulate the staggered TopK strategy.

    predictions: date -> (tickers, scores) where scores is either a 1-D array
    or an (n, L) array from which horizon_index selects the column.
    """
    signal_dates = sorted(predictions)
    if not signal_dates:
        raise ValueError("no prediction dates")
    for d in signal_dates:
        tickers, _ = predictions[d]
        if len(tickers) < config.topk:
            raise ValueError(f"{d}: only {len(tickers)} predictions, topk={config.topk}")

    vwap = panel.field("vwap")
    valid = panel.valid
    date_idx = {d: i for i, d in enumerate(panel.dates)}
    s_idx = {s: i for i, s in enumerate(panel.stocks)}

    # fills happen the trading day after the signal
    fills = {}  # panel date index -> (tranche, selection list)
    for q, d in enumerate(signal_dates):
        di = date_idx[d]
        if di + 1 >= panel.n_dates:
            continue
        tickers, scores = predictions[d]
        scores = np.asarray(scores)
        if scores.ndim == 2:
            scores = scores[:, horizon_index]
        fills[di + 1] = (q % config.delta_t, _select_topk(tickers, scores, config.topk))

    if not fills:
        raise ValueError("no fill days inside the panel")
    start = min(fills)
    sim_days = list(range(start, panel.n_dates))

    # stock daily vwap returns, NaN where either endpoint is invalid
    ret = np.full_like(vwap, np.nan)
    ok = valid[1:] & valid[:-1]
    ret[1:] = np.where(ok, vwap[1:] / np.where(ok, vwap[:-1], 1.0) - 1.0, np.nan)

    tranche_value = np.full(config.delta_t, 1.0 / config.delta_t)
    tranche_weights = [dict() for _ in range(config.delta_t)]
    events: list[str] = []
    dates, port_ret, bench_ret, turnover = [], [], [], []

    for di in sim_days:
        day_turn_notional = 0.0
        day_cost = 0.0
        value_before = tranche_value.sum()
        # accrue returns on drifted holdings
        for d_i in range(config.delta_t):
            w = tranche_weights[d_i]
            if not w:
                continue
            growth = 0.0
            for tk, wt in w.items():
                r = ret[di, s_idx[tk]]
                if not np.isfinite(r):
                    r = 0.0  # untradable day: position carried flat
                growth += wt * r
            tranche_value[d_i] *= 1.0 + growth
            if growth != 0.0:
                tranche_weights[d_i] = {
                    tk: wt * (1.0 + (ret[di, s_idx[tk]] if np.isfinite(ret[di, s_idx[tk]]) else 0.0))
                    / (1.0 + growth)
                    for tk, wt in w.items()}
        # rebalance the scheduled tranche at this day's vwap
        if di in fills:
            d_i, selection = fills[di]
            tradable = [tk for tk in selection if valid[di, s_idx[tk]]]
            if len(tradable) < len(selection):
                dropped = sorted(set(selection) - set(tradable))
                events.append(f"{panel.dates[di].isoformat()}: skipped untradable {dropped}")
            if tradable:
                target = {tk: 1.0 / len(tradable) for tk in tradable}
                old = tranche_weights[d_i]
                names = set(old) | set(target)
                sells = sum(max(old.get(tk, 0.0) - target.get(tk, 0.0), 0.0) for tk in names)
                buys = sum(max(target.get(tk, 0.0) - old.get(tk, 0.0), 0.0) for tk in names)
                notional = (sells + buys) * tranche_value[d_i]
                day_turn_notional += notional
                day_cost += config.cost_rate * notional
                tranche_value[d_i] -= config.cost_rate * notional
                tranche_weights[d_i] = target
            else:
                events.append(f"{panel.dates[di].isoformat()}: whole selection untradable")
        value_after = tranche_value.sum()
        dates.append(panel.dates[di])
        port_ret.append(value_after / value_before - 1.0)
        turnover.append(day_turn_notional / value_before)
        if benchmark_series is not None:
            bench_ret.append(float(benchmark_series.get(panel.dates[di], 0.0)))
        else:
            day = ret[di]
            good = day[np.isfinite(day)]
            bench_ret.append(float(good.mean()) if good.size else 0.0)

    port = np.array(port_ret)
    bench = np.array(bench_ret)
    excess = port - bench
    ar, ir, romad = report_metrics(excess, config)
    return BacktestReport(dates, port, bench, np.cumsum(port), np.cumsum(excess),
                          np.array(turnover), ar, ir, romad, events)
