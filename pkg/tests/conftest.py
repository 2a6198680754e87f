import os

import numpy as np
import pytest

from svtime import kernels
from svtime.data import SeriesMatrix

ACCEPTANCE_LINES = []


def record(criterion, passed, detail):
    status = {True: "PASS", False: "FAIL", None: "SKIP"}[passed]
    ACCEPTANCE_LINES.append(f"criterion {criterion:>2}: {status}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(params=["numpy", "numba"] if kernels.HAVE_NUMBA else ["numpy"])
def kernel_path(request, monkeypatch):
    monkeypatch.setattr(kernels, "USE_NUMBA", request.param == "numba")
    return request.param


def synthetic_series(L=2000, D=3, period=24, seed=0, noise=0.3, trend=0.001):
    """Daily-ish seasonality, a weekly component, drift and AR(1) noise."""
    rng = np.random.default_rng(seed)
    t = np.arange(L)
    rows = []
    for d in range(D):
        e = rng.normal(size=L)
        ar = np.zeros(L)
        for i in range(1, L):
            ar[i] = 0.8 * ar[i - 1] + e[i]
        rows.append(2.0 * np.sin(2 * np.pi * t / period + d) + 0.5 * np.sin(2 * np.pi * t / (7 * period))
                    + trend * t * (d + 1) + noise * ar)
    return SeriesMatrix(np.array(rows), [f"v{d}" for d in range(D)], [str(i) for i in t])


def write_csv(path, series):
    with open(path, "w") as fh:
        fh.write("date," + ",".join(series.variate_names) + "\n")
        for t in range(series.L):
            fh.write(series.timestamps[t] + "," + ",".join(repr(float(v)) for v in series.values[:, t]) + "\n")
    return path


DATA_DIR = os.path.abspath(os.environ.get("SVTIME_DATA_DIR", os.path.join(os.path.dirname(__file__), "..", "data")))


def perturbed_model(cfg, seed=0, scale=0.3):
    from svtime.model import SVTimeModel

    rng = np.random.default_rng(seed)
    m = SVTimeModel(cfg, seed=seed)
    for k, v in m.params.items():
        m.params[k] = np.asarray(v + rng.normal(scale=scale, size=v.shape))
    return m


def gradient_check(model, x, y, h=1e-5, floor=1e-8):
    """Worst relative error of analytic vs central-difference gradients, per tensor.

    Coordinates whose absolute difference is within ``floor`` count as exact.
    """
    _, grads = model.loss_and_grads(x, y)
    worst = {}
    for name, p in model.params.items():
        flat = p.reshape(-1)
        fd = np.empty(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            model.touch()
            lp = model.loss_and_grads(x, y)[0]
            flat[i] = orig - h
            model.touch()
            lm = model.loss_and_grads(x, y)[0]
            flat[i] = orig
            fd[i] = (lp - lm) / (2 * h)
        model.touch()
        an = grads[name].reshape(-1)
        diff = np.abs(fd - an)
        denom = np.maximum(np.abs(fd), np.abs(an))
        rel = np.where(diff <= floor, 0.0, diff / np.where(denom > 0, denom, 1.0))
        worst[name] = float(rel.max()) if rel.size else 0.0
    return worst
