"""Market panel ingestion, labels, window batches, and rolling splits.

CSV schemas (bit-exact):

* panel file:  header ``date,ticker,open,high,low,close,vwap,volume``,
  ISO-8601 dates, decimal point, no thousands separators;
* prior-factor file: header ``ticker,factor_id``, one row per membership.

Rows with missing or non-positive prices are marked invalid, never imputed.
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, field

import numpy as np

PANEL_FIELDS = ("open", "high", "low", "close", "vwap", "volume")
PANEL_HEADER = ("date", "ticker") + PANEL_FIELDS
PRIOR_HEADER = ("ticker", "factor_id")


class DataError(ValueError):
    pass


@dataclass
class MarketPanel:
    """Aligned (date x stock x field) daily price-volume data with validity masks."""

    dates: list[dt.date]
    stocks: list[str]
    values: np.ndarray            # (n_dates, n_stocks, 6)
    valid: np.ndarray             # (n_dates, n_stocks) bool
    access_log: set | None = None  # date indices touched, when auditing is on

    @property
    def n_dates(self):
        return len(self.dates)

    @property
    def n_stocks(self):
        return len(self.stocks)

    def field(self, name: str) -> np.ndarray:
        return self.values[:, :, PANEL_FIELDS.index(name)]

    def enable_audit(self):
        self.access_log = set()

    def note_access(self, first_idx: int, last_idx: int):
        if self.access_log is not None:
            self.access_log.update(range(first_idx, last_idx + 1))

    def date_index(self, date: dt.date) -> int:
        i = np.searchsorted(np.array(self.dates), date)
        if i >= len(self.dates) or self.dates[i] != date:
            raise DataError(f"date {date} not in panel")
        return int(i)


@dataclass
class PriorExposure:
    """(stock x prior-factor) binary incidence matrix."""

    stocks: list[str]
    factor_ids: list[str]
    matrix: np.ndarray  # (N, K) in {0,1}


@dataclass
class WindowBatch:
    """One anchor date's cross-section: past/future feature windows plus labels."""

    anchor_date: dt.date
    stocks: list[str]
    stock_idx: np.ndarray       # indices into the panel stock list
    x: np.ndarray               # (n, T, D)
    x_future: np.ndarray        # (n, T', D)
    labels: np.ndarray | None   # (n, L) cross-sectionally standardized
    raw_labels: np.ndarray | None
    prior: np.ndarray           # (n, K)
    degenerate_labels: bool = False


@dataclass
class SplitPlan:
    """Rolling (train, valid, test) date-range triples; ranges are half-open pairs."""

    triples: list[tuple[tuple[dt.date, dt.date], tuple[dt.date, dt.date], tuple[dt.date, dt.date]]]


def _parse_float(text: str, line_no: int, col: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise DataError(f"line {line_no}: cannot parse {col}={text!r}") from None


def load_panel(path) -> MarketPanel:
    """Load a panel CSV into aligned arrays; invalid rows are masked, not dropped."""
    rows = {}
    dates, stocks = set(), set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != PANEL_HEADER:
            raise DataError(f"bad panel header {header!r}, expected {','.join(PANEL_HEADER)}")
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(PANEL_HEADER):
                raise DataError(f"line {line_no}: expected {len(PANEL_HEADER)} columns, got {len(row)}")
            try:
                date = dt.date.fromisoformat(row[0])
            except ValueError:
                raise DataError(f"line {line_no}: bad date {row[0]!r}") from None
            ticker = row[1]
            key = (date, ticker)
            if key in rows:
                raise DataError(f"line {line_no}: duplicate (date,ticker) {key}")
            vals = [_parse_float(v, line_no, c) for v, c in zip(row[2:], PANEL_FIELDS)]
            rows[key] = vals
            dates.add(date)
            stocks.add(ticker)
    if not rows:
        raise DataError(f"panel file {path} contains no data rows")
    date_list = sorted(dates)
    stock_list = sorted(stocks)
    values = np.zeros((len(date_list), len(stock_list), len(PANEL_FIELDS)))
    valid = np.zeros((len(date_list), len(stock_list)), dtype=bool)
    d_idx = {d: i for i, d in enumerate(date_list)}
    s_idx = {s: i for i, s in enumerate(stock_list)}
    for (date, ticker), vals in rows.items():
        i, j = d_idx[date], s_idx[ticker]
        arr = np.array(vals)
        ok = np.all(np.isfinite(arr)) and np.all(arr[:5] > 0) and arr[5] >= 0
        values[i, j] = arr
        valid[i, j] = bool(ok)
    return MarketPanel(date_list, stock_list, values, valid)


def load_prior(path, stocks: list[str]) -> PriorExposure:
    """Load industry memberships aligned to the given stock order."""
    memberships = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != PRIOR_HEADER:
            raise DataError(f"bad prior header {header!r}, expected {','.join(PRIOR_HEADER)}")
        for line_no, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise DataError(f"line {line_no}: expected 2 columns, got {len(row)}")
            memberships.append((row[0], row[1]))
    factor_ids = sorted({f for _, f in memberships})
    s_idx = {s: i for i, s in enumerate(stocks)}
    f_idx = {f: i for i, f in enumerate(factor_ids)}
    matrix = np.zeros((len(stocks), len(factor_ids)))
    for ticker, factor in memberships:
        if ticker in s_idx:
            matrix[s_idx[ticker], f_idx[factor]] = 1.0
    return PriorExposure(list(stocks), factor_ids, matrix)


def compute_labels(panel: MarketPanel, horizons) -> np.ndarray:
    """Raw forward returns (vwap_{t+dt+1} - vwap_{t+1}) / vwap_{t+1}.

    Returns a (n_dates, n_stocks, len(horizons)) array with NaN where the
    forward window is unavailable or touches an invalid day.
    """
    vwap = panel.field("vwap")
    n_d, n_s = vwap.shape
    out = np.full((n_d, n_s, len(horizons)), np.nan)
    for li, h in enumerate(horizons):
        if h < 1:
            raise DataError(f"horizon must be >= 1, got {h}")
        last = n_d - h - 1
        if last <= 0:
            continue
        p0 = vwap[1:last + 1]
        p1 = vwap[1 + h:last + 1 + h]
        ok = panel.valid[1:last + 1] & panel.valid[1 + h:last + 1 + h]
        ret = np.where(ok, (p1 - np.where(ok, p0, 1.0)) / np.where(ok, p0, 1.0), np.nan)
        out[:last, :, li] = ret
    return out


def cross_section_standardize(values: np.ndarray, valid: np.ndarray | None = None):
    """Standardize one date's stock vector to mean 0, population std 1.

    Returns (standardized, degenerate_flag); invalid entries come back NaN.
    """
    if valid is None:
        valid = np.isfinite(values)
    v = values[valid]
    if v.size < 2:
        raise DataError(f"need >= 2 valid stocks to standardize, got {v.size}")
    out = np.full_like(values, np.nan, dtype=np.float64)
    std = v.std()
    if std == 0.0:
        out[valid] = 0.0
        return out, True
    out[valid] = (v - v.mean()) / std
    return out, False


def build_window_batch(panel: MarketPanel, labels: np.ndarray | None,
                       prior: PriorExposure, anchor_date: dt.date,
                       past_window: int, future_window: int,
                       require_labels: bool = True) -> WindowBatch:
    """Assemble the (past, future, labels) batch for one anchor date.

    Features are the 6 raw fields, each divided by its own value on the first
    day of its window (past and future windows self-normalize separately).
    Stocks with any invalid day in [t-T+1, t+T'], or (when labels are
    required) any missing label, are dropped.
    """
    t = panel.date_index(anchor_date)
    if t - past_window + 1 < 0:
        raise DataError(f"anchor {anchor_date}: needs {past_window} past days")
    if t + future_window >= panel.n_dates:
        raise DataError(f"anchor {anchor_date}: needs {future_window} future days")
    lo, hi = t - past_window + 1, t + future_window
    panel.note_access(lo, hi)
    window_valid = panel.valid[lo:hi + 1].all(axis=0)
    keep = window_valid.copy()
    raw = None
    if labels is not None and require_labels:
        raw = labels[t]  # (n_stocks, L)
        keep &= np.isfinite(raw).all(axis=1)
    idx = np.flatnonzero(keep)
    if idx.size < 2:
        raise DataError(f"anchor {anchor_date}: fewer than 2 surviving stocks")

    past = panel.values[lo:t + 1, idx, :]              # (T, n, D)
    future = panel.values[t + 1:hi + 1, idx, :]        # (T', n, D)
    x = np.transpose(past / past[0], (1, 0, 2))
    if future_window > 0:
        x_future = np.transpose(future / future[0], (1, 0, 2))
    else:
        x_future = np.zeros((idx.size, 0, past.shape[2]))

    std_labels = raw_kept = None
    degenerate = False
    if raw is not None:
        raw_kept = raw[idx]
        std_labels = np.empty_like(raw_kept)
        for li in range(raw_kept.shape[1]):
            col, flag = cross_section_standardize(raw_kept[:, li])
            std_labels[:, li] = col
            degenerate |= flag

    return WindowBatch(
        anchor_date=anchor_date,
        stocks=[panel.stocks[i] for i in idx],
        stock_idx=idx,
        x=x,
        x_future=x_future,
        labels=std_labels,
        raw_labels=raw_kept,
        prior=prior.matrix[idx],
        degenerate_labels=degenerate,
    )


def _add_years(d: dt.date, years: int) -> dt.date:
    try:
        return d.replace(year=d.year + years)
    except ValueError:  # Feb 29
        return d.replace(year=d.year + years, month=2, day=28)


def rolling_splits(dates: list[dt.date], train_years: int = 5, valid_years: int = 1,
                   test_years: int = 2) -> SplitPlan:
    """Rolling triples advancing by the test length; test ranges tile the tail."""
    start, end = dates[0], dates[-1]
    need = train_years + valid_years + test_years
    if _add_years(start, need) > end + dt.timedelta(days=1):
        raise DataError(
            f"panel spans {start}..{end}; need at least {need} years for a "
            f"{train_years}:{valid_years}:{test_years} split")
    date_arr = np.array(dates)
    triples = []
    k = 0
    while True:
        t0 = _add_years(start, k * test_years)
        train = (t0, _add_years(t0, train_years))
        valid = (train[1], _add_years(t0, train_years + valid_years))
        test = (valid[1], min(_add_years(t0, need), end + dt.timedelta(days=1)))
        if test[0] > end:
            break
        # at least one trading day must fall inside the test range
        n_test = int(((date_arr >= test[0]) & (date_arr < test[1])).sum())
        if n_test == 0:
            break
        triples.append((train, valid, test))
        if test[1] > end:
            break
        k += 1
    return SplitPlan(triples)


def dates_in_range(dates: list[dt.date], rng: tuple[dt.date, dt.date]) -> list[dt.date]:
    return [d for d in dates if rng[0] <= d < rng[1]]
