"""``svtime`` command line: train, evaluate, predict, inspect, bench."""
import argparse
import csv
import json
import logging
import os
import sys
from contextlib import nullcontext
from dataclasses import asdict

import numpy as np

from . import checkpoint
from .config import (SUITE_FILE_KEYS, TRAIN_FILE_KEYS, read_json, resolve_path,
                     train_config_from)
from .data import SplitSpec, fit_standardizer, load_csv, split, standardize
from .errors import ConfigError, DataError, SVTimeError
from .evaluation import (HORIZONS, METRIC_SPACE, ablation_suite, benchmark_suite,
                         default_patches, evaluate, write_reports)
from .imaging import default_period, detect_period
from .model import ModelConfig, forecast, parameter_count, sigmoid, softplus
from .training import block_search, fit

log = logging.getLogger("svtime")


def _threads(n):
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return nullcontext()
    return threadpool_limits(limits=n) if n else nullcontext()


def _split_spec(cfg, dataset_path):
    mode = cfg.get("split")
    base = os.path.basename(dataset_path)
    if mode is None:
        mode = "ett" if base.startswith("ETT") else "ratio"
    if mode == "ett":
        pph = cfg.get("points_per_hour", 4 if base.startswith("ETTm") else 1)
        return SplitSpec("ett", points_per_hour=int(pph))
    return SplitSpec(mode, tuple(cfg.get("split_ratios", (0.7, 0.1, 0.2))))


def _spec_from_header(extra):
    s = extra.get("split", {"mode": "ratio", "ratios": [0.7, 0.1, 0.2], "points_per_hour": 1})
    return SplitSpec(s["mode"], tuple(s["ratios"]), int(s["points_per_hour"]))


def _resolve_period(cfg, train_segment):
    if "period" in cfg and cfg["period"] != "auto":
        return int(cfg["period"])
    if "frequency" in cfg:
        return default_period(cfg["frequency"])
    return detect_period(train_segment.values[0])


def cmd_train(args):
    cfg = read_json(args.config, TRAIN_FILE_KEYS)
    if "dataset" not in cfg:
        raise ConfigError(f"{args.config}: missing required key 'dataset'")
    for key in ("T", "H"):
        if key not in cfg:
            raise ConfigError(f"{args.config}: missing required key {key!r}")
    data_path = resolve_path(args.config, cfg["dataset"])
    T, H = int(cfg["T"]), int(cfg["H"])
    spec = _split_spec(cfg, data_path)
    series = load_csv(data_path)
    train, val, test = split(series, spec, T, H)
    P = _resolve_period(cfg, train)
    model_cfg = ModelConfig(
        variant=cfg.get("variant", "svtime"), T=T, H=H, P=P,
        K=int(cfg.get("K", default_patches(P))), num_blocks=int(cfg.get("num_blocks", 1)),
        ablation=frozenset(cfg.get("ablation", ())),
        svtimet_backcast=cfg.get("svtimet_backcast", "mean"))
    train_cfg = train_config_from(cfg, seed=args.seed)
    stats = fit_standardizer(train)
    train, val = standardize(train, stats), standardize(val, stats)

    ckpt_path = args.checkpoint or resolve_path(args.config, cfg.get("checkpoint")) \
        or os.path.splitext(args.config)[0] + ".ckpt"
    log_path = resolve_path(args.config, cfg.get("log")) or os.path.splitext(ckpt_path)[0] + ".log.jsonl"
    with _threads(args.threads or cfg.get("threads")):
        if train_cfg.block_search:
            best, scores, results = block_search(train, val, model_cfg, train_cfg)
            result = results[best]
            with open(log_path, "w") as fh:
                fh.write(result.log_lines())
            print(json.dumps({"block_search": {str(k): v for k, v in scores.items()},
                              "num_blocks": best}))
        else:
            result = fit(train, val, model_cfg, train_cfg, log_path=log_path)
    model = result.model
    extra = {
        "dataset": os.path.basename(data_path),
        "variate_names": series.variate_names,
        "split": {"mode": spec.mode, "ratios": list(spec.ratios),
                  "points_per_hour": spec.points_per_hour},
        "train_config": asdict(train_cfg),
        "best_epoch": result.best_epoch,
        "best_val_mse": result.best_val_mse,
        "metric_space": METRIC_SPACE,
    }
    checkpoint.save(ckpt_path, model, stats, extra, result.log)
    print(f"checkpoint: {ckpt_path}")
    print(f"log: {log_path}")
    print(f"best validation mse: {result.best_val_mse:.6f} (epoch {result.best_epoch})")
    print(f"parameters: {parameter_count(model.config)}")
    return 0


def cmd_evaluate(args):
    model, stats, header = checkpoint.load(args.checkpoint)
    cfg = model.config
    if args.horizon is not None and args.horizon != cfg.H:
        raise ConfigError(f"checkpoint was trained for H={cfg.H}, requested H={args.horizon}; "
                          "the trend layer is horizon-specific, retrain for a new horizon")
    series = load_csv(args.data)
    expected_d = len(stats.mean) if stats is not None else series.D
    if series.D != expected_d:
        raise DataError(f"dataset has {series.D} variates, checkpoint expects {expected_d}")
    spec = _spec_from_header(header.get("extra", {}))
    train, val, test = split(series, spec, cfg.T, cfg.H)
    if stats is None:
        stats = fit_standardizer(train)
    test = standardize(test, stats)
    with _threads(args.threads):
        report = evaluate(model, test, cfg.T, cfg.H,
                          dataset=header.get("extra", {}).get("dataset", os.path.basename(args.data)))
    report.config["svtimet_backcast"] = cfg.svtimet_backcast
    report.config["split"] = spec.mode
    print(json.dumps(asdict(report), default=_default))
    if args.csv:
        write_reports([report], os.path.dirname(os.path.abspath(args.csv)),
                      os.path.splitext(os.path.basename(args.csv))[0])
    return 0


def cmd_predict(args):
    model, stats, header = checkpoint.load(args.checkpoint)
    cfg = model.config
    series = load_csv(args.data)
    if series.L < cfg.T:
        raise DataError(f"need at least T={cfg.T} rows to forecast, got {series.L}")
    if stats is not None and series.D != len(stats.mean):
        raise DataError(f"dataset has {series.D} variates, checkpoint expects {len(stats.mean)}")
    x = series.values[:, -cfg.T:]
    if stats is not None:
        x = (x - stats.mean[:, None]) / stats.std[:, None]
    y = forecast(x, model)
    if stats is not None:
        y = y * stats.std[:, None] + stats.mean[:, None]
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step"] + list(series.variate_names))
        for h in range(cfg.H):
            w.writerow([series.L + h] + [repr(float(v)) for v in y[:, h]])
    print(f"wrote {cfg.H} forecast rows to {args.out}")
    return 0


def cmd_inspect(args):
    model, stats, header = checkpoint.load(args.checkpoint)
    cfg = model.config
    print(f"variant: {cfg.variant}")
    print(f"config: {json.dumps(cfg.to_dict())}")
    print(f"periods: N={cfg.N} history, M={cfg.M} forecast; patches K={cfg.patches}")
    for name, p in model.params.items():
        print(f"  {name}: shape {tuple(p.shape)}")
    count = parameter_count(cfg)
    if count != model.n_parameters():
        raise SVTimeError(f"parameter count mismatch: formula {count}, stored {model.n_parameters()}")
    print(f"parameters: {count}")
    if cfg.backcast:
        print(f"gate g: {float(sigmoid(model.params['w_g'])):.6f}")
    if cfg.variant == "svtime-t":
        for l in range(cfg.num_blocks):
            a = float(softplus(model.params[f"block{l}.b_alpha"]))
            b = float(softplus(model.params[f"block{l}.b_beta"]))
            print(f"block{l} on zero input: alpha={a:.6f} beta={b:.6f}")
    if stats is not None:
        print(f"standardization: {len(stats.mean)} variates")
    extra = header.get("extra", {})
    if "best_val_mse" in extra:
        print(f"best validation mse: {extra['best_val_mse']:.6f} (epoch {extra.get('best_epoch')})")
    print(f"training log sha256: {header.get('training_log_digest')}")
    return 0


def cmd_bench(args):
    cfg = read_json(args.suite, SUITE_FILE_KEYS)
    data_dir = resolve_path(args.suite, cfg.get("data_dir", "."))
    out = resolve_path(args.suite, cfg.get("out", "bench_out"))
    base = ModelConfig(variant=cfg.get("variant", "svtime"), T=int(cfg.get("T", 512)), H=96,
                       P=24, K=1, num_blocks=int(cfg.get("num_blocks", 1)),
                       ablation=frozenset(cfg.get("ablation", ())),
                       svtimet_backcast=cfg.get("svtimet_backcast", "mean"))
    train_cfg = train_config_from(cfg, seed=args.seed)
    seeds = cfg.get("seeds", [2021, 2022, 2023])
    horizons = tuple(cfg.get("horizons", HORIZONS))
    K = cfg.get("K")
    datasets = cfg.get("datasets", ["ETTh1"])
    with _threads(args.threads or cfg.get("threads")):
        reports, summary = benchmark_suite(datasets, base, train_cfg, seeds, horizons, data_dir, K)
        write_reports(reports, out, "benchmark", summary)
        for (d, v), s in summary.items():
            print(f"{d} {v}: mse {s['mse'][0]:.4f} ± {s['mse'][1]:.4f}  "
                  f"mae {s['mae'][0]:.4f} ± {s['mae'][1]:.4f}")
        ablations = []
        for flags in cfg.get("ablations", []):
            for d in datasets:
                res = ablation_suite(d, base, flags, train_cfg, seeds, horizons, data_dir, K)
                ablations.append({k: v for k, v in res.items() if k != "reports"})
                print(f"{d} {base.variant} -{'/'.join(flags)}: mse {res['full']['mse']:.4f} -> "
                      f"{res['ablated']['mse']:.4f} ({res['mse_change_pct']:+.1f}%)")
        if ablations:
            with open(os.path.join(out, "ablations.json"), "w") as fh:
                json.dump(ablations, fh, indent=2)
    return 0


def _default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, (set, frozenset)):
        return sorted(o)
    raise TypeError(type(o))


def build_parser():
    p = argparse.ArgumentParser(prog="svtime", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model from a JSON config")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--threads", type=int)
    t.add_argument("--checkpoint", help="output path (overrides the config)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="score a checkpoint on a dataset's test split")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--horizon", type=int)
    e.add_argument("--csv", help="also write a CSV report")
    e.add_argument("--threads", type=int)
    e.set_defaults(func=cmd_evaluate)

    pr = sub.add_parser("predict", help="forecast from the last T rows of a CSV")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--data", required=True)
    pr.add_argument("--out", required=True)
    pr.set_defaults(func=cmd_predict)

    i = sub.add_parser("inspect", help="summarise a checkpoint")
    i.add_argument("--checkpoint", required=True)
    i.set_defaults(func=cmd_inspect)

    b = sub.add_parser("bench", help="run a benchmark / ablation suite")
    b.add_argument("--suite", required=True)
    b.add_argument("--seed", type=int)
    b.add_argument("--threads", type=int)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SVTimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FloatingPointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
