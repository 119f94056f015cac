"""Command-line entry point.

Subcommands: gen, train, predict, eval, backtest, sweep-hidden. Every run
writes a manifest.json (resolved config, input digests, seed, artifact list)
into the output directory; reruns with identical inputs reproduce identical
bytes. All emitted figures are data-only CSV series.
"""

from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import sys
from dataclasses import asdict

import numpy as np
import yaml

from . import __version__
from .backtest import BacktestConfig, run_topk
from .data import DataError, load_panel, load_prior, compute_labels, rolling_splits
from .evaluation import ablation_matrix, evaluate_predictions, sweep_hidden
from .network import ModelConfig, load_checkpoint, save_checkpoint, VARIANTS
from .synthetic import SynthSpec, generate_market, write_panel_csv, write_prior_csv, \
    write_truth_csv
from .training import TrainConfig, TrainingError, run_rolling, predict_range, \
    prediction_anchors


def _fmt(x: float) -> str:
    return repr(float(x))


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir, command, config, inputs, artifacts, seed):
    manifest = {
        "tool": "hgfactor",
        "version": __version__,
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": {str(p): _digest(p) for p in inputs},
        "artifacts": sorted(str(a) for a in artifacts),
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return path


def _load_config_file(path):
    if path is None:
        return {}
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise DataError(f"config file {path} must be a mapping")
    return raw


def _build_configs(args):
    """Merge config file sections with explicit CLI overrides."""
    raw = _load_config_file(getattr(args, "config", None))
    model_kw = dict(raw.get("model", {}))
    train_kw = dict(raw.get("train", {}))
    overrides = {
        "embed_dim": args.embed_dim, "n_hidden_factors": args.hidden_factors,
        "gamma": args.gamma, "tau": args.tau, "variant": args.variant,
        "past_window": args.past_window, "future_window": args.future_window,
        "seed": args.seed,
    }
    for key, val in overrides.items():
        if val is not None:
            model_kw[key] = val
    if args.horizons is not None:
        model_kw["horizons"] = tuple(int(h) for h in args.horizons.split(","))
    elif "horizons" in model_kw:
        model_kw["horizons"] = tuple(model_kw["horizons"])
    for key, val in (("lr", args.lr), ("max_epochs", args.epochs),
                     ("patience", args.patience), ("days_per_epoch", args.days_per_epoch),
                     ("seed", args.seed)):
        if val is not None:
            train_kw[key] = val
    return ModelConfig(**model_kw), TrainConfig(**train_kw)


def _add_model_flags(p):
    p.add_argument("--config", help="YAML config file with model:/train: sections")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--embed-dim", type=int, default=None)
    p.add_argument("--hidden-factors", type=int, default=None)
    p.add_argument("--horizons", help="comma-separated forward periods, e.g. 1,5,10,20")
    p.add_argument("--past-window", type=int, default=None)
    p.add_argument("--future-window", type=int, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--variant", choices=VARIANTS, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--days-per-epoch", type=int, default=None)


def _add_split_flags(p):
    p.add_argument("--train-years", type=int, default=5)
    p.add_argument("--valid-years", type=int, default=1)
    p.add_argument("--test-years", type=int, default=2)


def write_predictions_csv(predictions: dict, horizons, path):
    with open(path, "w", newline="") as fh:
        fh.write("date,ticker,horizon,score\n")
        for d in sorted(predictions):
            tickers, scores = predictions[d]
            for si, tk in enumerate(tickers):
                for li, h in enumerate(horizons):
                    fh.write(f"{d.isoformat()},{tk},{h},{_fmt(scores[si, li])}\n")


def read_predictions_csv(path):
    """Returns (predictions dict, horizons tuple)."""
    import csv

    per_date: dict = {}
    horizons: list[int] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["date", "ticker", "horizon", "score"]:
            raise DataError(f"bad predictions header {header!r}")
        for row in reader:
            d = dt.date.fromisoformat(row[0])
            h = int(row[2])
            if h not in horizons:
                horizons.append(h)
            per_date.setdefault(d, {}).setdefault(row[1], {})[h] = float(row[3])
    predictions = {}
    for d, stocks in per_date.items():
        tickers = sorted(stocks)
        scores = np.array([[stocks[tk][h] for h in horizons] for tk in tickers])
        predictions[d] = (tickers, scores)
    return predictions, tuple(horizons)


def _write_metrics_csv(reports, path):
    with open(path, "w", newline="") as fh:
        fh.write("tag,horizon,ic,icir,rank_ic,n_days,n_excluded\n")
        for rep in reports:
            for li, h in enumerate(rep.horizons):
                fh.write(f"{rep.tag},{h},{_fmt(rep.ic[li])},{_fmt(rep.icir[li])},"
                         f"{_fmt(rep.rank_ic[li])},{rep.n_days},{rep.n_excluded[li]}\n")


def _write_daily_ic_csv(report, dates, path):
    with open(path, "w", newline="") as fh:
        fh.write("date," + ",".join(f"ic_{h}" for h in report.horizons) + "\n")
        for di, d in enumerate(dates):
            cells = ",".join(_fmt(v) for v in report.daily_ic[di])
            fh.write(f"{d.isoformat()},{cells}\n")


def _config_snapshot(model_cfg, train_cfg):
    snap = {"model": {**asdict(model_cfg), "horizons": list(model_cfg.horizons)},
            "train": asdict(train_cfg)}
    return snap


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen(args):
    out = _ensure_out(args.out)
    spec = SynthSpec(n_stocks=args.n, n_prior=args.k, n_hidden_true=args.m_true,
                     days=args.days, factor_vol=args.factor_vol,
                     idio_vol=args.idio_vol, persistence=args.persistence,
                     seed=args.seed if args.seed is not None else 0)
    panel, prior, truth = generate_market(spec)
    artifacts = [out / "panel.csv", out / "prior.csv", out / "truth.csv"]
    write_panel_csv(panel, artifacts[0])
    write_prior_csv(prior, artifacts[1])
    write_truth_csv(truth, panel, artifacts[2])
    cfg = {k: (v.isoformat() if isinstance(v, dt.date) else v)
           for k, v in asdict(spec).items()}
    _write_manifest(out, "gen", cfg, [], artifacts, spec.seed)
    return 0


def cmd_train(args):
    out = _ensure_out(args.out)
    model_cfg, train_cfg = _build_configs(args)
    panel = load_panel(args.panel)
    prior = load_prior(args.prior, panel.stocks)
    plan = rolling_splits(panel.dates, args.train_years, args.valid_years,
                          args.test_years)
    predictions, results = run_rolling(panel, prior, plan, model_cfg, train_cfg)
    artifacts = []
    for i, (params, log, triple) in enumerate(results):
        ckpt = out / f"model_{i:03d}.ckpt"
        save_checkpoint(ckpt, params, model_cfg)
        log_path = out / f"trainlog_{i:03d}.json"
        log_path.write_text(json.dumps(
            {"best_epoch": log.best_epoch,
             "triple": [[r[0].isoformat(), r[1].isoformat()] for r in triple],
             "epochs": [asdict(e) for e in log.epochs]},
            sort_keys=True, indent=2) + "\n")
        artifacts += [ckpt, log_path]
    pred_path = out / "predictions.csv"
    write_predictions_csv(predictions, model_cfg.horizons, pred_path)
    artifacts.append(pred_path)
    _write_manifest(out, "train", _config_snapshot(model_cfg, train_cfg),
                    [args.panel, args.prior], artifacts, train_cfg.seed)
    return 0


def cmd_predict(args):
    out = _ensure_out(args.out)
    params, model_cfg = load_checkpoint(args.checkpoint)
    panel = load_panel(args.panel)
    prior = load_prior(args.prior, panel.stocks)
    rng = (dt.date.fromisoformat(args.start), dt.date.fromisoformat(args.end))
    anchors = prediction_anchors(panel, rng, model_cfg)
    if not anchors:
        raise DataError(f"no predictable dates in [{args.start}, {args.end})")
    predictions = predict_range(panel, prior, params, model_cfg, anchors)
    pred_path = out / "predictions.csv"
    write_predictions_csv(predictions, model_cfg.horizons, pred_path)
    _write_manifest(out, "predict", {"start": args.start, "end": args.end},
                    [args.panel, args.prior, args.checkpoint], [pred_path],
                    model_cfg.seed)
    return 0


def cmd_eval(args):
    out = _ensure_out(args.out)
    panel = load_panel(args.panel)
    prior = load_prior(args.prior, panel.stocks)
    artifacts = []
    if args.ablation:
        model_cfg, train_cfg = _build_configs(args)
        labels = compute_labels(panel, model_cfg.horizons)
        plan = rolling_splits(panel.dates, args.train_years, args.valid_years,
                              args.test_years)
        train_r, valid_r, test_r = plan.triples[0]
        variants = VARIANTS if args.ablation == "all" else tuple(args.ablation.split(","))
        reports = ablation_matrix(panel, prior, labels, train_r, valid_r, test_r,
                                  model_cfg, train_cfg, variants=variants)
        metrics_path = out / "ablation_metrics.csv"
        _write_metrics_csv(reports, metrics_path)
        artifacts.append(metrics_path)
        config = _config_snapshot(model_cfg, train_cfg)
        inputs = [args.panel, args.prior]
        seed = model_cfg.seed
    else:
        if args.predictions is None:
            raise DataError("eval needs --predictions unless --ablation is given")
        predictions, horizons = read_predictions_csv(args.predictions)
        labels = compute_labels(panel, horizons)
        report = evaluate_predictions(predictions, panel, labels, horizons)
        metrics_path = out / "metrics.csv"
        _write_metrics_csv([report], metrics_path)
        daily_path = out / "daily_ic.csv"
        _write_daily_ic_csv(report, sorted(predictions), daily_path)
        artifacts += [metrics_path, daily_path]
        config = {"horizons": list(horizons)}
        inputs = [args.panel, args.prior, args.predictions]
        seed = 0
    _write_manifest(out, "eval", config, inputs, artifacts, seed)
    return 0


def cmd_backtest(args):
    out = _ensure_out(args.out)
    panel = load_panel(args.panel)
    predictions, horizons = read_predictions_csv(args.predictions)
    cfg = BacktestConfig(topk=args.topk, delta_t=args.delta_t,
                         cost_rate=args.cost_rate,
                         trading_days_per_year=args.trading_days_per_year)
    try:
        h_index = horizons.index(args.horizon) if args.horizon is not None else 0
    except ValueError:
        raise DataError(f"horizon {args.horizon} not in predictions {horizons}") from None
    report = run_topk(predictions, panel, cfg, horizon_index=h_index)
    curves_path = out / "curves.csv"
    with open(curves_path, "w", newline="") as fh:
        fh.write("date,cr,cer,turnover\n")
        for i, d in enumerate(report.dates):
            fh.write(f"{d.isoformat()},{_fmt(report.cr[i])},{_fmt(report.cer[i])},"
                     f"{_fmt(report.turnover[i])}\n")
    metrics_path = out / "backtest_metrics.csv"
    with open(metrics_path, "w", newline="") as fh:
        fh.write("ar,ir,romad\n")
        fh.write(f"{_fmt(report.ar)},{_fmt(report.ir)},{_fmt(report.romad)}\n")
    events_path = out / "events.log"
    events_path.write_text("".join(e + "\n" for e in report.events))
    _write_manifest(out, "backtest", asdict(cfg),
                    [args.panel, args.predictions],
                    [curves_path, metrics_path, events_path], 0)
    return 0


def cmd_sweep_hidden(args):
    out = _ensure_out(args.out)
    model_cfg, train_cfg = _build_configs(args)
    panel = load_panel(args.panel)
    prior = load_prior(args.prior, panel.stocks)
    labels = compute_labels(panel, model_cfg.horizons)
    plan = rolling_splits(panel.dates, args.train_years, args.valid_years,
                          args.test_years)
    train_r, valid_r, test_r = plan.triples[0]
    grid = [int(g) for g in args.grid.split(",")]
    rows = sweep_hidden(grid, panel, prior, labels, train_r, valid_r, test_r,
                        model_cfg, train_cfg)
    path = out / "sweep_hidden.csv"
    with open(path, "w", newline="") as fh:
        fh.write("n_hidden_factors,horizon,ic,icir\n")
        for m, rep in rows:
            for li, h in enumerate(rep.horizons):
                fh.write(f"{m},{h},{_fmt(rep.ic[li])},{_fmt(rep.icir[li])}\n")
    _write_manifest(out, "sweep-hidden", _config_snapshot(model_cfg, train_cfg),
                    [args.panel, args.prior], [path], model_cfg.seed)
    return 0


def _ensure_out(out):
    from pathlib import Path

    p = Path(out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def build_parser():
    parser = argparse.ArgumentParser(prog="hgfactor",
                                     description="Hypergraph factor model toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic market")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--m-true", type=int, default=3)
    p.add_argument("--days", type=int, default=1260)
    p.add_argument("--factor-vol", type=float, default=0.02)
    p.add_argument("--idio-vol", type=float, default=0.01)
    p.add_argument("--persistence", type=float, default=0.1)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="rolling-window training")
    p.add_argument("--panel", required=True)
    p.add_argument("--prior", required=True)
    p.add_argument("--out", required=True)
    _add_model_flags(p)
    _add_split_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score dates from a checkpoint")
    p.add_argument("--panel", required=True)
    p.add_argument("--prior", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--start", required=True)
    p.add_argument("--end", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="IC/ICIR metrics or the ablation matrix")
    p.add_argument("--panel", required=True)
    p.add_argument("--prior", required=True)
    p.add_argument("--predictions")
    p.add_argument("--ablation", help="'all' or comma-separated variant names")
    p.add_argument("--out", required=True)
    _add_model_flags(p)
    _add_split_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("backtest", help="TopK investment simulation")
    p.add_argument("--panel", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--topk", type=int, default=30)
    p.add_argument("--delta-t", type=int, default=10)
    p.add_argument("--cost-rate", type=float, default=0.003)
    p.add_argument("--trading-days-per-year", type=int, default=252)
    p.add_argument("--horizon", type=int, default=None)
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("sweep-hidden", help="IC vs hidden-factor-count table")
    p.add_argument("--panel", required=True)
    p.add_argument("--prior", required=True)
    p.add_argument("--grid", required=True, help="comma-separated counts, e.g. 2,8,32")
    p.add_argument("--out", required=True)
    _add_model_flags(p)
    _add_split_flags(p)
    p.set_defaults(func=cmd_sweep_hidden)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DataError, TrainingError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
