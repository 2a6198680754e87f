import itertools

import numpy as np
import pytest

from conftest import gradient_check, perturbed_model
from svtime.model import ModelConfig, sigmoid


def _configs(T):
    for variant in ("svtime", "svtime-t"):
        flags = ["no-ib2", "no-backcast"] + (["no-ib3"] if variant == "svtime-t" else [])
        modes = ("mean", "scale-identity") if variant == "svtime-t" else ("mean",)
        for nb in (1, 2):
            for r in range(len(flags) + 1):
                for fl in itertools.combinations(flags, r):
                    for mode in modes:
                        yield ModelConfig(variant, T=T, H=10, P=6, K=2, num_blocks=nb,
                                          ablation=fl, svtimet_backcast=mode)


# T=27 leaves a 3-point remainder in front of the image
@pytest.mark.parametrize("cfg", list(_configs(27)), ids=str)
def test_gradients_with_remainder(cfg, kernel_path):
    rng = np.random.default_rng(11)
    m = perturbed_model(cfg, seed=5)
    x, y = rng.normal(size=(3, cfg.T)), rng.normal(size=(3, cfg.H))
    worst = gradient_check(m, x, y)
    assert max(worst.values()) < 1e-4, worst


def test_gate_gradient_closed_form():
    cfg = ModelConfig("svtime", T=24, H=12, P=6, K=2)
    m = perturbed_model(cfg, seed=1)
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=(2, 24)), rng.normal(size=(2, 12))
    tr = m.forward(x)
    g = float(sigmoid(m.params["w_g"]))
    expected = np.sum(2 * (tr.final - y) * (tr.trend_forecast - tr.period_forecast) * g * (1 - g)) / y.size
    _, grads = m.loss_and_grads(x, y)
    assert grads["w_g"] == pytest.approx(expected, rel=1e-12)
    h = 1e-5
    m.params["w_g"] = m.params["w_g"] + h
    m.touch()
    lp = m.loss_and_grads(x, y)[0]
    m.params["w_g"] = m.params["w_g"] - 2 * h
    m.touch()
    lm = m.loss_and_grads(x, y)[0]
    assert abs((lp - lm) / (2 * h) - expected) / abs(expected) < 1e-4


@pytest.mark.parametrize("variant", ["svtime", "svtime-t"])
def test_zero_residual_gives_zero_gradients(variant):
    cfg = ModelConfig(variant, T=24, H=12, P=6, K=2)
    m = perturbed_model(cfg)
    x = np.random.default_rng(0).normal(size=(2, 24))
    y = m.forward(x).final
    loss, grads = m.loss_and_grads(x, y)
    assert loss == 0.0
    for g in grads.values():
        np.testing.assert_array_equal(g, 0.0)


def test_gradient_shapes_mirror_params():
    cfg = ModelConfig("svtime-t", T=30, H=7, P=6, K=3, num_blocks=3)
    m = perturbed_model(cfg)
    _, grads = m.loss_and_grads(np.ones((2, 30)), np.zeros((2, 7)))
    assert set(grads) == set(m.params)
    for k in grads:
        assert grads[k].shape == m.params[k].shape
        assert np.all(np.isfinite(grads[k]))
