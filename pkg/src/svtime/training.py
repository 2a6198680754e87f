"""MSE training with analytic gradients, Adam, early stopping and block search."""
import copy
import json
import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .data import normalize, windows
from .errors import ConfigError, NumericError, SVTimeError
from .evaluation import score_windows
from .model import SVTimeModel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 512
    max_epochs: int = 50
    patience: int = 5
    seed: int = 2021
    beta1: float = 0.9
    beta2: float = 0.999
    eps_opt: float = 1e-8
    optimizer: str = "adam"
    lr_schedule: str = "constant"
    grad_clip: float = 5.0
    block_search: bool = False
    eval_batch_windows: int = 256

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not 1 <= self.patience < self.max_epochs:
            raise ConfigError(f"need 1 <= patience < max_epochs, got patience={self.patience}, "
                              f"max_epochs={self.max_epochs}")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.lr_schedule not in ("constant", "plateau"):
            raise ConfigError(f"unknown lr_schedule {self.lr_schedule!r}")


def mse_loss(pred, target):
    pred, target = np.asarray(pred, dtype=np.float64), np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))


# --------------------------------------------------------------------------
# optimiser
# --------------------------------------------------------------------------

@dataclass
class OptimizerState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    lr: float = None


def global_norm(grads):
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))


def optimizer_step(params, grads, state, config):
    """Update ``params`` in place and return ``(params, state)``.

    Adam with bias correction, or plain gradient descent when
    ``config.optimizer == "sgd"``. Gradients whose global norm exceeds
    ``config.grad_clip`` are rescaled to that norm first.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name}")
    lr = config.learning_rate if state.lr is None else state.lr
    scale = 1.0
    if config.grad_clip:
        norm = global_norm(grads)
        if norm > config.grad_clip:
            scale = config.grad_clip / norm
    state.step += 1
    t = state.step
    for name, p in params.items():
        g = grads[name] * scale
        if config.optimizer == "sgd":
            p -= lr * g
            continue
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= config.beta1
        m += (1.0 - config.beta1) * g
        v *= config.beta2
        v += (1.0 - config.beta2) * g * g
        m_hat = m / (1.0 - config.beta1 ** t)
        v_hat = v / (1.0 - config.beta2 ** t)
        p -= lr * m_hat / (np.sqrt(v_hat) + config.eps_opt)
    return params, state


# --------------------------------------------------------------------------
# fitting
# --------------------------------------------------------------------------

@dataclass
class FitResult:
    model: SVTimeModel
    log: list
    best_epoch: int
    best_val_mse: float
    best_val_mae: float

    def log_lines(self):
        return "".join(json.dumps(rec) + "\n" for rec in self.log)


def _normalised_batch(ws, idx, center):
    x, y = ws.samples(idx)
    xn, stats = normalize(x, center=center)
    yn = (y - stats.mean[:, None]) / stats.std[:, None]
    return xn, yn


def fit(train, val, model_config, train_config, model=None, log_path=None):
    """Train on ``train`` windows, early-stop on validation MSE.

    ``train`` and ``val`` are segments from :func:`svtime.data.split`; the
    validation windows borrow their lookback from the preceding data. The
    loss is MSE on window-normalised targets; ``val_mse``/``val_mae`` are in
    the segment's own value space.
    """
    T, H = model_config.T, model_config.H
    tr = windows(train, T, H, allow_overhang=False)
    va = windows(val, T, H, allow_overhang=True)
    if model is None:
        model = SVTimeModel(model_config, seed=train_config.seed)
    rng = np.random.default_rng(train_config.seed)
    state = OptimizerState(lr=train_config.learning_rate)
    center = model_config.mean_center
    n_samples = len(tr) * tr.D
    bs = train_config.batch_size

    best = (math.inf, math.inf, 0, copy.deepcopy(model.params))
    records = []
    stale = 0
    fh = open(log_path, "w") if log_path else None
    try:
        for epoch in range(1, train_config.max_epochs + 1):
            t0 = time.perf_counter()
            order = rng.permutation(n_samples)
            total, count = 0.0, 0
            for start in range(0, n_samples, bs):
                idx = order[start:start + bs]
                x, y = _normalised_batch(tr, idx, center)
                loss, grads = model.loss_and_grads(x, y)
                if not math.isfinite(loss):
                    raise NumericError(f"training loss became non-finite at epoch {epoch}")
                optimizer_step(model.params, grads, state, train_config)
                model.touch()
                total += loss * len(idx)
                count += len(idx)
            val_mse, val_mae = score_windows(model, va, train_config.eval_batch_windows)
            rec = {"epoch": epoch, "train_loss": total / count, "val_mse": val_mse,
                   "val_mae": val_mae, "seconds": time.perf_counter() - t0}
            records.append(rec)
            if fh:
                fh.write(json.dumps(rec) + "\n")
                fh.flush()
            log.info("epoch %d train %.5f val mse %.5f mae %.5f (%.1fs)", epoch,
                     rec["train_loss"], val_mse, val_mae, rec["seconds"])
            if not math.isfinite(val_mse):
                err = NumericError(f"validation MSE diverged at epoch {epoch}")
                err.log = records
                raise err
            if val_mse < best[0]:
                best = (val_mse, val_mae, epoch, copy.deepcopy(model.params))
                stale = 0
            else:
                stale += 1
                if train_config.lr_schedule == "plateau":
                    state.lr *= 0.5
                if stale >= train_config.patience:
                    break
    finally:
        if fh:
            fh.close()
    model.params = best[3]
    model.touch()
    return FitResult(model, records, best[2], best[0], best[1])


def select_blocks(val_mses):
    """Block count with the lowest validation MSE; ties go to fewer blocks."""
    finite = {n: v for n, v in val_mses.items() if v is not None and math.isfinite(v)}
    if not finite:
        raise NumericError("block search: every candidate failed")
    return min(sorted(finite), key=lambda n: finite[n])


def block_search(train, val, model_config, train_config, choices=(1, 2, 3)):
    """Train one model per block count and keep the best on validation.

    Returns ``(best_count, {count: val_mse}, {count: FitResult})``. A count
    whose training fails is dropped with a warning.
    """
    scores, results = {}, {}
    for n in choices:
        cfg = replace(model_config, num_blocks=n)
        try:
            res = fit(train, val, cfg, train_config)
        except SVTimeError as exc:
            log.warning("block search: num_blocks=%d failed: %s", n, exc)
            scores[n] = None
            continue
        scores[n] = res.best_val_mse
        results[n] = res
    best = select_blocks(scores)
    return best, scores, results
