"""SVTime and SVTime-t forecasters with hand-written backward passes.

A model works on a batch of univariate, already normalised lookbacks
``x`` of shape ``(B, T)``; :func:`forecast` wraps that with per-window
normalisation for ``(..., D, T)`` input. All variates share one parameter set.

Parameters live in a flat ``dict`` of float64 arrays:

* SVTime: ``block{l}.W`` with shape ``(K, N, N)`` for intermediate blocks and
  ``(K, N, N + M)`` for the final block (backcast columns first).
* SVTime-t: ``block{l}.w_alpha`` ``(T,)``, ``block{l}.b_alpha`` ``()``,
  ``block{l}.w_beta`` ``(T,)``, ``block{l}.b_beta`` ``()``, ``block{l}.w_p`` ``(K,)``.
* trend branch and gate: ``W_B`` ``(T, H)``, ``b_B`` ``(H,)``, ``w_g`` ``()``.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .data import denormalize, normalize
from .errors import ConfigError, NumericError
from .imaging import from_image, patch_layout, to_image

VARIANTS = ("svtime", "svtime-t")
ABLATIONS = ("no-ib2", "no-ib3", "no-backcast", "no-mean-center")
BACKCAST_MODES = ("mean", "scale-identity")

# softplus(b) = 1.0 and 0.5 respectively
_ALPHA_BIAS0 = math.log(math.expm1(1.0))
_BETA_BIAS0 = math.log(math.expm1(0.5))


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "svtime"
    T: int = 512
    H: int = 96
    P: int = 24
    K: int = 4
    num_blocks: int = 1
    ablation: frozenset = frozenset()
    svtimet_backcast: str = "mean"

    def __post_init__(self):
        object.__setattr__(self, "ablation", frozenset(self.ablation))
        self.validate()

    def validate(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        bad = set(self.ablation) - set(ABLATIONS)
        if bad:
            raise ConfigError(f"unknown ablation flags {sorted(bad)}; known: {list(ABLATIONS)}")
        if "no-ib3" in self.ablation and self.variant != "svtime-t":
            raise ConfigError("ablation no-ib3 only applies to variant svtime-t")
        if self.svtimet_backcast not in BACKCAST_MODES:
            raise ConfigError(f"unknown svtimet_backcast {self.svtimet_backcast!r}")
        if min(self.T, self.H, self.P, self.K) < 1:
            raise ConfigError("T, H, P and K must all be positive")
        if self.K > self.P:
            raise ConfigError(f"patch count exceeds period (K={self.K}, P={self.P})")
        if self.T < self.P:
            raise ConfigError(f"lookback T={self.T} is shorter than the period P={self.P}")
        if not 1 <= self.num_blocks <= 3:
            raise ConfigError(f"num_blocks must be in [1, 3], got {self.num_blocks}")

    @property
    def N(self):
        return self.T // self.P

    @property
    def M(self):
        return -(-self.H // self.P)

    @property
    def patches(self):
        """Effective patch count (1 under the no-ib2 ablation)."""
        return 1 if "no-ib2" in self.ablation else self.K

    @property
    def layout(self):
        return patch_layout(self.P, self.patches)

    @property
    def backcast(self):
        return "no-backcast" not in self.ablation

    @property
    def mean_center(self):
        return "no-mean-center" not in self.ablation

    def to_dict(self):
        return {"variant": self.variant, "T": self.T, "H": self.H, "P": self.P, "K": self.K,
                "num_blocks": self.num_blocks, "ablation": sorted(self.ablation),
                "svtimet_backcast": self.svtimet_backcast}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["ablation"] = frozenset(d.get("ablation", ()))
        return cls(**d)


def parameter_count(config):
    """Closed-form number of trainable scalars."""
    K, N, M, T, H = config.patches, config.N, config.M, config.T, config.H
    if config.variant == "svtime":
        core = (config.num_blocks - 1) * K * N * N + K * N * (N + M)
    else:
        core = config.num_blocks * (2 * (T + 1) + K)
    return core + (T * H + H + 1 if config.backcast else 0)


def parameter_shapes(config):
    K, N, M, T, H = config.patches, config.N, config.M, config.T, config.H
    shapes = {}
    for l in range(config.num_blocks):
        final = l == config.num_blocks - 1
        if config.variant == "svtime":
            shapes[f"block{l}.W"] = (K, N, N + M if final else N)
        else:
            shapes[f"block{l}.w_alpha"] = (T,)
            shapes[f"block{l}.b_alpha"] = ()
            shapes[f"block{l}.w_beta"] = (T,)
            shapes[f"block{l}.b_beta"] = ()
            shapes[f"block{l}.w_p"] = (K,)
    if config.backcast:
        shapes["W_B"] = (T, H)
        shapes["b_B"] = (H,)
        shapes["w_g"] = ()
    return shapes


def init_params(config, rng):
    N = config.N
    params = {}
    for name, shape in parameter_shapes(config).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "W":
            params[name] = rng.uniform(-1.0 / N, 1.0 / N, size=shape)
        elif leaf == "b_alpha":
            params[name] = np.array(_ALPHA_BIAS0)
        elif leaf == "b_beta":
            params[name] = np.array(_BETA_BIAS0)
        elif leaf == "w_p":
            params[name] = np.ones(shape)
        else:
            params[name] = np.zeros(shape)
    return params


# --------------------------------------------------------------------------
# elementary pieces
# --------------------------------------------------------------------------

def softplus(z):
    z = np.asarray(z, dtype=np.float64)
    big = z > 20.0
    safe = np.where(big, 0.0, z)
    return np.where(big, z + np.log1p(np.exp(-np.where(big, z, 0.0))), np.log1p(np.exp(safe)))


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def annealing_weights(M, N, alpha, beta):
    """Column-normalised ``(N, M)`` annealing weights for scalar alpha, beta."""
    w = kernels.annealing(np.array([float(alpha)]), np.array([float(beta)]), int(N), int(M))
    return w[0]


def compute_scalers(x, w_alpha, b_alpha, w_beta, b_beta):
    """``(alpha, beta)`` per lookback row of ``x`` (shape ``(..., T)``)."""
    x = np.asarray(x, dtype=np.float64)
    return softplus(x @ w_alpha + b_alpha), softplus(x @ w_beta + b_beta)


def _flatten_image(img):
    return np.swapaxes(img, -1, -2).reshape(img.shape[:-2] + (-1,))


def _unflatten(flat, P):
    B, L = flat.shape
    return np.swapaxes(flat.reshape(B, L // P, P), -1, -2)


def _patch_sums(per_row, row_patch, K):
    return np.bincount(row_patch, weights=per_row, minlength=K)


# --------------------------------------------------------------------------
# blocks
# --------------------------------------------------------------------------

def svtime_block_forward(img, layout, W):
    """Patch-wise linear mixing of historical periods.

    ``img`` is ``(B, P, N)``; ``W`` is ``(K, N, C)``; returns ``(B, P, C)``.
    A final block has ``C = N + M`` (backcast periods first).
    """
    img = np.asarray(img, dtype=np.float64)
    if W.shape[0] != layout.K or W.shape[1] != img.shape[-1]:
        raise ConfigError(f"block weights {W.shape} do not match image {img.shape} with K={layout.K}")
    squeeze = img.ndim == 2
    out = kernels.patch_forward(img[None] if squeeze else img, W, layout.boundaries)
    return out[0] if squeeze else out


def svtime_t_block_forward(img, layout, x, params, prefix, M, *, is_final=True,
                           uniform=False, backcast_mode="mean"):
    """Annealing-weighted forecast plus scalar-only backcast.

    Returns ``(backcast_image, forecast_image, cache)``; the forecast image is
    ``None`` for an intermediate block.
    """
    B, P, N = img.shape
    w_p = params[prefix + "w_p"]
    if w_p.shape != (layout.K,):
        raise ConfigError(f"{prefix}w_p has shape {w_p.shape}, expected ({layout.K},)")
    row_patch = layout.row_patch()
    s = w_p[row_patch]
    cache = {"s": s, "row_patch": row_patch}
    fore = None
    if is_final:
        a_pre = x @ params[prefix + "w_alpha"] + params[prefix + "b_alpha"]
        b_pre = x @ params[prefix + "w_beta"] + params[prefix + "b_beta"]
        alpha, beta = softplus(a_pre), softplus(b_pre)
        if uniform:
            Wt = np.full((B, N, M), 1.0 / N)
        else:
            Wt = kernels.annealing(alpha, beta, N, M)
        F = img @ Wt
        fore = s[:, None] * F
        cache.update(a_pre=a_pre, b_pre=b_pre, alpha=alpha, beta=beta, Wt=Wt, F=F)
    if backcast_mode == "mean":
        rmean = img.mean(axis=-1)
        back = np.broadcast_to((s * rmean)[..., None], (B, P, N)).copy()
        cache["rmean"] = rmean
    else:
        back = s[:, None] * img
    return back, fore, cache


# --------------------------------------------------------------------------
# full model
# --------------------------------------------------------------------------

@dataclass
class ForwardTrace:
    lookback: np.ndarray
    backcast: np.ndarray
    period_forecast: np.ndarray
    residual: np.ndarray
    trend_forecast: np.ndarray
    final: np.ndarray
    gate: float
    version: int = -1
    blocks: list = field(default_factory=list, repr=False)


class SVTimeModel:
    """Parameters plus forward/backward for one :class:`ModelConfig`."""

    def __init__(self, config, params=None, seed=0):
        config.validate()
        self.config = config
        self.params = init_params(config, np.random.default_rng(seed)) if params is None else params
        self.version = 0
        self.check_params()

    def check_params(self):
        expected = parameter_shapes(self.config)
        if set(expected) != set(self.params):
            raise ConfigError(f"parameter names {sorted(self.params)} do not match "
                              f"configuration {sorted(expected)}")
        for name, shape in expected.items():
            arr = np.asarray(self.params[name], dtype=np.float64)
            if arr.shape != shape:
                raise ConfigError(f"parameter {name} has shape {arr.shape}, expected {shape}")
            self.params[name] = arr

    def n_parameters(self):
        return int(sum(p.size for p in self.params.values()))

    def touch(self):
        """Mark parameters as modified; older traces become stale."""
        self.version += 1

    # -- forward -----------------------------------------------------------

    def forward(self, x):
        cfg = self.config
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != cfg.T:
            raise ConfigError(f"expected lookback batch of shape (B, {cfg.T}), got {x.shape}")
        layout = cfg.layout
        P, N, M, H = cfg.P, cfg.N, cfg.M, cfg.H
        r = cfg.T - N * P
        state = x
        caches = []
        back_img = fore_img = None
        for l in range(cfg.num_blocks):
            final = l == cfg.num_blocks - 1
            image = to_image(state, P)
            img = image.values
            cache = {"img": img, "input": state}
            if cfg.variant == "svtime":
                W = self.params[f"block{l}.W"]
                out = svtime_block_forward(img, layout, W)
                back_img = out[..., :N]
                fore_img = out[..., N:] if final else None
            else:
                back_img, fore_img, extra = svtime_t_block_forward(
                    img, layout, state, self.params, f"block{l}.", M, is_final=final,
                    uniform="no-ib3" in cfg.ablation, backcast_mode=cfg.svtimet_backcast)
                cache.update(extra)
            caches.append(cache)
            if not final:
                state = np.concatenate([image.remainder, _flatten_image(back_img)], axis=1)

        xhat = np.zeros_like(x)
        xhat[:, r:] = _flatten_image(back_img)
        yhat = from_image(fore_img, H)
        if cfg.backcast:
            g = float(sigmoid(self.params["w_g"]))
            resid = x - xhat
            trend = resid @ self.params["W_B"] + self.params["b_B"]
            final_out = g * trend + (1.0 - g) * yhat
        else:
            g = 0.0
            resid = x - xhat
            trend = np.zeros_like(yhat)
            final_out = yhat
        return ForwardTrace(x, xhat, yhat, resid, trend, final_out, g, self.version, caches)

    # -- backward ----------------------------------------------------------

    def backward(self, trace, dfinal):
        """Gradients of a loss given ``dfinal = dLoss/dfinal`` (shape ``(B, H)``)."""
        if trace.version != self.version:
            raise NumericError("stale forward trace: parameters changed since it was computed")
        cfg = self.config
        layout = cfg.layout
        P, N, M, H = cfg.P, cfg.N, cfg.M, cfg.H
        B = dfinal.shape[0]
        r = cfg.T - N * P
        grads = {}

        if cfg.backcast:
            g = trace.gate
            d_trend = g * dfinal
            d_yhat = (1.0 - g) * dfinal
            grads["w_g"] = np.array(np.sum(dfinal * (trace.trend_forecast - trace.period_forecast))
                                    * g * (1.0 - g))
            grads["W_B"] = trace.residual.T @ d_trend
            grads["b_B"] = d_trend.sum(axis=0)
            d_xhat = -(d_trend @ self.params["W_B"].T)
            d_back = _unflatten(d_xhat[:, r:], P)
        else:
            d_yhat = dfinal
            d_back = np.zeros((B, P, N))

        padded = np.zeros((B, M * P))
        padded[:, :H] = d_yhat
        d_fore = _unflatten(padded, P)

        carry = np.zeros((B, r))
        for l in reversed(range(cfg.num_blocks)):
            cache = trace.blocks[l]
            img = cache["img"]
            final = l == cfg.num_blocks - 1
            d_input = np.zeros((B, cfg.T))
            if cfg.variant == "svtime":
                W = self.params[f"block{l}.W"]
                d_out = np.concatenate([d_back, d_fore], axis=-1) if final else d_back
                d_img, grads[f"block{l}.W"] = kernels.patch_backward(img, W, layout.boundaries, d_out)
            else:
                d_img = self._svtime_t_backward(l, cache, d_back, d_fore if final else None,
                                                d_input, grads)
            d_input[:, r:] += _flatten_image(d_img)
            # remainder positions pass straight through intermediate blocks
            d_input[:, :r] += carry
            d_back = _unflatten(d_input[:, r:], P)
            carry = d_input[:, :r]
        for name in self.params:
            grads.setdefault(name, np.zeros_like(self.params[name]))
        return grads

    def _svtime_t_backward(self, l, cache, d_back, d_fore, d_input, grads):
        cfg = self.config
        prefix = f"block{l}."
        K = cfg.patches
        img = cache["img"]
        s, row_patch = cache["s"], cache["row_patch"]
        N = img.shape[-1]
        dw_p = np.zeros(K)
        d_img = np.zeros_like(img)
        if cfg.svtimet_backcast == "mean":
            rmean = cache["rmean"]
            per_row = (d_back.sum(axis=-1) * rmean).sum(axis=0)
            dw_p += _patch_sums(per_row, row_patch, K)
            d_img += (s * d_back.sum(axis=-1))[..., None] / N
        else:
            per_row = (d_back * img).sum(axis=(0, 2))
            dw_p += _patch_sums(per_row, row_patch, K)
            d_img += s[:, None] * d_back
        zero = np.zeros(cfg.T)
        grads[prefix + "w_alpha"] = zero.copy()
        grads[prefix + "b_alpha"] = np.array(0.0)
        grads[prefix + "w_beta"] = zero.copy()
        grads[prefix + "b_beta"] = np.array(0.0)
        if d_fore is not None:
            F, Wt = cache["F"], cache["Wt"]
            per_row = (d_fore * F).sum(axis=(0, 2))
            dw_p += _patch_sums(per_row, row_patch, K)
            dF = s[:, None] * d_fore
            d_img += dF @ np.swapaxes(Wt, -1, -2)
            if "no-ib3" not in cfg.ablation:
                dWt = np.swapaxes(img, -1, -2) @ dF
                dalpha, dbeta = kernels.annealing_backward(Wt, cache["alpha"], cache["beta"], dWt)
                da = dalpha * sigmoid(cache["a_pre"])
                db = dbeta * sigmoid(cache["b_pre"])
                x_in = cache["input"]
                grads[prefix + "w_alpha"] = x_in.T @ da
                grads[prefix + "b_alpha"] = np.array(da.sum())
                grads[prefix + "w_beta"] = x_in.T @ db
                grads[prefix + "b_beta"] = np.array(db.sum())
                d_input += da[:, None] * self.params[prefix + "w_alpha"]
                d_input += db[:, None] * self.params[prefix + "w_beta"]
        grads[prefix + "w_p"] = dw_p
        return d_img

    # -- convenience -------------------------------------------------------

    def loss_and_grads(self, x, y):
        """MSE over all elements of a normalised batch and its gradients."""
        trace = self.forward(x)
        diff = trace.final - y
        loss = float(np.mean(diff * diff))
        return loss, self.backward(trace, 2.0 * diff / diff.size)


def framework_forward(lookback, model):
    """Forward one normalised lookback (``(T,)``) or a batch (``(B, T)``)."""
    x = np.asarray(lookback, dtype=np.float64)
    trace = model.forward(x[None] if x.ndim == 1 else x)
    return trace


def forecast(lookback, model, normalize_input=True):
    """Forecast raw-space ``(..., D, T)`` lookbacks to ``(..., D, H)``.

    Every variate is normalised with its own window statistics, forecast with
    the shared parameters and de-normalised. ``normalize_input=False`` skips
    the normalisation entirely (used to check the linear core).
    """
    x = np.asarray(lookback, dtype=np.float64)
    cfg = model.config
    if x.shape[-1] != cfg.T:
        raise ConfigError(f"lookback length {x.shape[-1]} does not match T={cfg.T}")
    lead = x.shape[:-1]
    flat = x.reshape(-1, cfg.T)
    if normalize_input:
        z, stats = normalize(flat, center=cfg.mean_center)
        out = denormalize(model.forward(z).final, stats)
    else:
        out = model.forward(flat).final
    return out.reshape(lead + (cfg.H,))
