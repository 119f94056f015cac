"""Synthetic market panels with known latent factor structure.

Daily returns are built as r = B_prior z_prior + B_hidden z_hidden + idio,
with AR(1) factor return paths, so recovery of the hidden loadings and the
return decomposition can be scored exactly.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np

from .data import MarketPanel, PriorExposure, PANEL_FIELDS


@dataclass
class SynthSpec:
    n_stocks: int = 50
    n_prior: int = 5
    n_hidden_true: int = 3
    days: int = 1260
    factor_vol: float = 0.02
    idio_vol: float = 0.01
    persistence: float = 0.1
    seed: int = 0
    start_date: dt.date = dt.date(2014, 1, 1)

    def validate(self):
        if self.n_stocks < 4:
            raise ValueError("need at least 4 stocks")
        if self.n_prior < 1:
            raise ValueError("need at least 1 prior factor")
        if self.n_hidden_true < 0:
            raise ValueError("hidden factor count must be >= 0")
        if self.factor_vol <= 0 or self.idio_vol < 0:
            raise ValueError("volatilities must be positive")
        if not 0.0 <= self.persistence < 1.0:
            raise ValueError("persistence must be in [0, 1)")


@dataclass
class GroundTruth:
    prior_loadings: np.ndarray    # (N, K) binary
    hidden_loadings: np.ndarray   # (N, M_true) in [0, 1]
    factor_returns: np.ndarray    # (days, K + M_true), prior block first
    idio_returns: np.ndarray      # (days, N)
    stock_returns: np.ndarray     # (days, N), the realized decomposition sum


def _trading_days(start: dt.date, count: int) -> list[dt.date]:
    days = []
    d = start
    while len(days) < count:
        if d.weekday() < 5:
            days.append(d)
        d += dt.timedelta(days=1)
    return days


def _ar1_paths(rng, days: int, count: int, vol: float, rho: float) -> np.ndarray:
    """Stationary AR(1) paths with marginal std = vol."""
    innov_scale = vol * np.sqrt(1.0 - rho * rho)
    z = np.zeros((days, count))
    prev = rng.normal(0.0, vol, size=count)
    for t in range(days):
        prev = rho * prev + rng.normal(0.0, innov_scale, size=count)
        z[t] = prev
    return z


def generate_market(spec: SynthSpec):
    """Build (MarketPanel, PriorExposure, GroundTruth) deterministically from the spec."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n, k, m = spec.n_stocks, spec.n_prior, spec.n_hidden_true

    industry = rng.integers(0, k, size=n)
    prior = np.zeros((n, k))
    prior[np.arange(n), industry] = 1.0
    hidden = rng.beta(2.0, 2.0, size=(n, m)) if m > 0 else np.zeros((n, 0))

    z = _ar1_paths(rng, spec.days, k + m, spec.factor_vol, spec.persistence)
    idio = rng.normal(0.0, spec.idio_vol, size=(spec.days, n))
    loadings = np.hstack([prior, hidden])
    returns = z @ loadings.T + idio

    close = 100.0 * np.cumprod(1.0 + returns, axis=0)
    prev_close = np.vstack([np.full((1, n), 100.0), close[:-1]])
    open_jit = rng.normal(0.0, 0.002, size=(spec.days, n))
    open_ = prev_close * (1.0 + open_jit)
    hi_jit = np.abs(rng.normal(0.0, 0.003, size=(spec.days, n)))
    lo_jit = np.abs(rng.normal(0.0, 0.003, size=(spec.days, n)))
    high = np.maximum(open_, close) * (1.0 + hi_jit)
    low = np.minimum(open_, close) * (1.0 - lo_jit)
    volume = np.exp(rng.normal(13.0, 0.5, size=(spec.days, n)))

    values = np.zeros((spec.days, n, len(PANEL_FIELDS)))
    for i, arr in enumerate([open_, high, low, close, close, volume]):
        values[:, :, i] = arr

    dates = _trading_days(spec.start_date, spec.days)
    stocks = [f"S{i:04d}" for i in range(n)]
    panel = MarketPanel(dates, stocks, values, np.ones((spec.days, n), dtype=bool))
    exposure = PriorExposure(stocks, [f"IND{j:02d}" for j in range(k)], prior)
    truth = GroundTruth(prior, hidden, z, idio, returns)
    return panel, exposure, truth


# ---------------------------------------------------------------------------
# CSV emission (dataio schema plus a ground-truth sidecar)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_panel_csv(panel: MarketPanel, path):
    with open(path, "w", newline="") as fh:
        fh.write("date,ticker," + ",".join(PANEL_FIELDS) + "\n")
        for di, d in enumerate(panel.dates):
            for si, s in enumerate(panel.stocks):
                if not panel.valid[di, si]:
                    continue
                row = ",".join(_fmt(v) for v in panel.values[di, si])
                fh.write(f"{d.isoformat()},{s},{row}\n")


def write_prior_csv(exposure: PriorExposure, path):
    with open(path, "w", newline="") as fh:
        fh.write("ticker,factor_id\n")
        for si, s in enumerate(exposure.stocks):
            for fi, f in enumerate(exposure.factor_ids):
                if exposure.matrix[si, fi] != 0.0:
                    fh.write(f"{s},{f}\n")


def write_truth_csv(truth: GroundTruth, panel: MarketPanel, path):
    """Sidecar with one row per (date, stock): hidden loadings are repeated
    per stock on the first date only; columns: date,ticker,ret,idio,h0..h{M-1}."""
    m = truth.hidden_loadings.shape[1]
    with open(path, "w", newline="") as fh:
        header = "date,ticker,ret,idio" + "".join(f",h{j}" for j in range(m))
        fh.write(header + "\n")
        for di, d in enumerate(panel.dates):
            for si, s in enumerate(panel.stocks):
                cells = [d.isoformat(), s, _fmt(truth.stock_returns[di, si]),
                         _fmt(truth.idio_returns[di, si])]
                if di == 0:
                    cells += [_fmt(v) for v in truth.hidden_loadings[si]]
                else:
                    cells += [""] * m
                fh.write(",".join(cells) + "\n")
