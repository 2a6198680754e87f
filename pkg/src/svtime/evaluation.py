"""Benchmark protocol: stride-1 test windows, MSE/MAE, suites and ablations."""
import csv
import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .data import SplitSpec, fit_standardizer, load_csv, split, standardize, windows
from .errors import DataError, SVTimeError
from .model import forecast, parameter_count

log = logging.getLogger(__name__)

HORIZONS = (96, 192, 336, 720)
METRIC_SPACE = "standardized (train-split z-score per variate)"
REPORT_COLUMNS = ("dataset", "variant", "horizon", "seed", "mse", "mae", "params",
                  "train_s", "infer_ms")


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    filename: str
    split: SplitSpec
    period: int


DATASETS = {
    "ETTh1": DatasetSpec("ETTh1", "ETTh1.csv", SplitSpec("ett", points_per_hour=1), 24),
    "ETTh2": DatasetSpec("ETTh2", "ETTh2.csv", SplitSpec("ett", points_per_hour=1), 24),
    "ETTm1": DatasetSpec("ETTm1", "ETTm1.csv", SplitSpec("ett", points_per_hour=4), 96),
    "ETTm2": DatasetSpec("ETTm2", "ETTm2.csv", SplitSpec("ett", points_per_hour=4), 96),
    "Weather": DatasetSpec("Weather", "weather.csv", SplitSpec("ratio", (0.7, 0.1, 0.2)), 144),
    "Electricity": DatasetSpec("Electricity", "electricity.csv",
                               SplitSpec("ratio", (0.7, 0.1, 0.2)), 24),
    "Traffic": DatasetSpec("Traffic", "traffic.csv", SplitSpec("ratio", (0.7, 0.1, 0.2)), 24),
    "Solar": DatasetSpec("Solar", "solar.csv", SplitSpec("ratio", (0.7, 0.1, 0.2)), 24),
}


@dataclass
class EvalReport:
    dataset: str
    horizon: int
    mse: float
    mae: float
    n_windows: int
    param_count: int
    train_seconds: float = 0.0
    inference_ms_per_window: float = 0.0
    seed: int = 0
    variant: str = ""
    metric_space: str = METRIC_SPACE
    config: dict = field(default_factory=dict)

    def row(self):
        return {"dataset": self.dataset, "variant": self.variant, "horizon": self.horizon,
                "seed": self.seed, "mse": self.mse, "mae": self.mae, "params": self.param_count,
                "train_s": self.train_seconds, "infer_ms": self.inference_ms_per_window}


def score_windows(model, ws, batch_windows=256, predict=None):
    """MSE and MAE of de-normalised forecasts over every window in ``ws``.

    Sums are accumulated window-batch by window-batch in index order, so the
    result does not depend on ``batch_windows`` beyond float rounding.
    """
    predict = predict or (lambda x: forecast(x, model))
    se = ae = 0.0
    count = 0
    for start in range(0, len(ws), batch_windows):
        idx = np.arange(start, min(start + batch_windows, len(ws)))
        x, y = ws.batch(idx)
        err = predict(x) - y
        se += float(np.sum(err * err))
        ae += float(np.sum(np.abs(err)))
        count += err.size
    return se / count, ae / count


def evaluate(model, test, T, H, dataset="", seed=0, train_seconds=0.0, predict=None,
             batch_windows=256):
    """Score ``model`` on every stride-1 window of the test segment.

    Lookbacks may reach back into the preceding (validation) data. ``predict``
    replaces the model's forecast function (used by tests).
    """
    ws = windows(test, T, H, allow_overhang=True)
    t0 = time.perf_counter()
    mse, mae = score_windows(model, ws, batch_windows, predict)
    elapsed = time.perf_counter() - t0
    cfg = model.config
    return EvalReport(dataset=dataset, horizon=H, mse=mse, mae=mae, n_windows=len(ws),
                      param_count=parameter_count(cfg), train_seconds=train_seconds,
                      inference_ms_per_window=1000.0 * elapsed / len(ws), seed=seed,
                      variant=cfg.variant, config=cfg.to_dict())


# --------------------------------------------------------------------------
# experiments
# --------------------------------------------------------------------------

_cache = {}


def prepare_dataset(path, split_spec, T, H):
    """Load, split and standardise with train-split statistics."""
    key = os.path.abspath(path)
    if key not in _cache:
        _cache[key] = load_csv(path)
    series = _cache[key]
    train, val, test = split(series, split_spec, T, H)
    stats = fit_standardizer(train)
    return tuple(standardize(s, stats) for s in (train, val, test)), stats


def run_experiment(path, split_spec, model_config, train_config, dataset=""):
    """Train (optionally with block search) and evaluate one configuration."""
    from .training import block_search, fit

    (train, val, test), _ = prepare_dataset(path, split_spec, model_config.T, model_config.H)
    t0 = time.perf_counter()
    if train_config.block_search:
        best, scores, results = block_search(train, val, model_config, train_config)
        result = results[best]
        log.info("%s H=%d block search %s -> %d", dataset, model_config.H, scores, best)
    else:
        result = fit(train, val, model_config, train_config)
    seconds = time.perf_counter() - t0
    report = evaluate(result.model, test, model_config.T, model_config.H, dataset=dataset,
                      seed=train_config.seed, train_seconds=seconds)
    report.config["svtimet_backcast"] = model_config.svtimet_backcast
    report.config["split"] = split_spec.mode
    report.config["best_epoch"] = result.best_epoch
    return report, result


def default_patches(P):
    return max(1, P // 6)


def _seed_stats(values):
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std(ddof=0)) if arr.size > 1 else 0.0


def summarize(reports):
    """Horizon averages per seed, then mean and std across seeds.

    Returns ``{(dataset, variant): {"mse": (mean, std), "mae": (mean, std),
    "per_horizon": {H: {"mse": (mean, std), "mae": (mean, std)}}}}``.
    """
    groups = {}
    for r in reports:
        groups.setdefault((r.dataset, r.variant), []).append(r)
    out = {}
    for key, rs in groups.items():
        per_seed = {}
        per_h = {}
        for r in rs:
            per_seed.setdefault(r.seed, []).append(r)
            per_h.setdefault(r.horizon, []).append(r)
        seed_mse = [np.mean([r.mse for r in v]) for v in per_seed.values()]
        seed_mae = [np.mean([r.mae for r in v]) for v in per_seed.values()]
        out[key] = {
            "mse": _seed_stats(seed_mse),
            "mae": _seed_stats(seed_mae),
            "per_horizon": {h: {"mse": _seed_stats([r.mse for r in v]),
                                "mae": _seed_stats([r.mae for r in v])}
                            for h, v in sorted(per_h.items())},
        }
    return out


def resolve_dataset(name, data_dir):
    if name in DATASETS:
        spec = DATASETS[name]
        return spec, os.path.join(data_dir, spec.filename)
    raise DataError(f"unknown dataset {name!r}; known: {sorted(DATASETS)}")


def benchmark_suite(datasets, model_config, train_config, seeds, horizons=HORIZONS,
                    data_dir=".", K=None):
    """Run every (dataset, horizon, seed) and return ``(reports, summary)``.

    ``datasets`` are names from :data:`DATASETS` or :class:`DatasetSpec`
    objects. The period and default patch count come from the dataset; T,
    the variant and ablations come from ``model_config``. Missing files are
    skipped with a warning.
    """
    reports = []
    for ds in datasets:
        if isinstance(ds, DatasetSpec):
            spec, path = ds, os.path.join(data_dir, ds.filename)
        else:
            spec, path = resolve_dataset(ds, data_dir)
        if not os.path.isfile(path):
            log.warning("skipping %s: %s not found", spec.name, path)
            continue
        for H in horizons:
            cfg = replace(model_config, H=H, P=spec.period,
                          K=K if K is not None else default_patches(spec.period))
            for seed in seeds:
                tc = replace(train_config, seed=seed)
                try:
                    report, _ = run_experiment(path, spec.split, cfg, tc, dataset=spec.name)
                except SVTimeError as exc:
                    log.warning("%s H=%d seed=%d failed: %s", spec.name, H, seed, exc)
                    continue
                log.info("%s %s H=%d seed=%d mse=%.4f mae=%.4f", spec.name, cfg.variant, H,
                         seed, report.mse, report.mae)
                reports.append(report)
    if not reports:
        raise DataError("benchmark suite produced no results (no dataset files found?)")
    return reports, summarize(reports)


def pct_change(full, ablated):
    return 100.0 * (ablated - full) / full


def ablation_suite(dataset, model_config, flags, train_config, seeds, horizons=HORIZONS,
                   data_dir=".", K=None):
    """Full versus ablated model on shared seeds.

    Returns a dict with both summaries and the signed percentage change of
    the horizon-averaged MSE and MAE (positive means the ablation is worse).
    """
    full_reports, full = benchmark_suite([dataset], model_config, train_config, seeds,
                                         horizons, data_dir, K)
    ablated_cfg = replace(model_config, ablation=frozenset(model_config.ablation) | set(flags))
    if ablated_cfg == model_config:
        ab_reports, ablated = full_reports, full
    else:
        ab_reports, ablated = benchmark_suite([dataset], ablated_cfg, train_config, seeds,
                                              horizons, data_dir, K)
    (f,) = full.values()
    (a,) = ablated.values()
    return {
        "dataset": getattr(dataset, "name", dataset),
        "variant": model_config.variant,
        "flags": sorted(flags),
        "full": {"mse": f["mse"][0], "mae": f["mae"][0]},
        "ablated": {"mse": a["mse"][0], "mae": a["mae"][0]},
        "mse_change_pct": pct_change(f["mse"][0], a["mse"][0]),
        "mae_change_pct": pct_change(f["mae"][0], a["mae"][0]),
        "reports": {"full": full_reports, "ablated": ab_reports},
    }


def write_reports(reports, out_dir, stem="report", summary=None):
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, stem + ".csv")
    with open(csv_path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        w.writeheader()
        for r in reports:
            w.writerow(r.row())
    payload = {"metric_space": METRIC_SPACE, "reports": [asdict(r) for r in reports]}
    if summary is not None:
        payload["summary"] = [
            {"dataset": d, "variant": v, "mse_mean": s["mse"][0], "mse_std": s["mse"][1],
             "mae_mean": s["mae"][0], "mae_std": s["mae"][1],
             "per_horizon": {str(h): m for h, m in s["per_horizon"].items()}}
            for (d, v), s in summary.items()]
    json_path = os.path.join(out_dir, stem + ".json")
    with open(json_path, "w") as fh:
        json.dump(payload, fh, indent=2, default=_json_default)
    return csv_path, json_path


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, (set, frozenset)):
        return sorted(o)
    if isinstance(o, float) and not math.isfinite(o):
        return None
    raise TypeError(type(o))
