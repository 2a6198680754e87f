import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from svtime.data import (EPS, SeriesMatrix, SplitSpec, denormalize, fit_standardizer, load_csv,
                         normalize, split, windows)
from svtime.errors import DataError


def _series(L, D=1):
    vals = np.arange(D * L, dtype=float).reshape(D, L)
    return SeriesMatrix(vals, [f"v{i}" for i in range(D)], [str(t) for t in range(L)])


def test_load_two_column_file(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("date,v\nt0,1.0\nt1,2.0\nt2,3.0\n")
    s = load_csv(str(p))
    assert (s.D, s.L) == (1, 3)
    np.testing.assert_array_equal(s.values, [[1, 2, 3]])
    assert s.timestamps == ["t0", "t1", "t2"]
    assert s.variate_names == ["v"]


def test_load_preserves_order(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("date,a,b\n0,5,-1\n1,4,-2\n2,3,-3\n")
    s = load_csv(str(p))
    assert s.values[1, 2] == -3
    assert s.values[0, 0] == 5


def test_non_numeric_cell_reports_row_and_column(tmp_path):
    lines = ["date,a,b,c"] + [f"t{i},1,2,3" for i in range(6)]
    lines[5] = "t4,1,abc,3"
    p = tmp_path / "bad.csv"
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(DataError, match="row 5, column 3"):
        load_csv(str(p))


@pytest.mark.parametrize("text, match", [
    ("date,v\nt0,1\n", "at least 2 data rows"),
    ("date\nt0\nt1\n", "value column"),
    ("date,v\nt0,1\nt1,nan\n", "non-finite value at data row 2"),
    ("date,v\nt0,1\nt1,\n", "row 2"),
])
def test_load_errors(tmp_path, text, match):
    p = tmp_path / "x.csv"
    p.write_text(text)
    with pytest.raises(DataError, match=match):
        load_csv(str(p))


def test_missing_file():
    with pytest.raises(DataError, match="no such"):
        load_csv("/nonexistent/file.csv")


def test_ratio_split_lengths():
    tr, va, te = split(_series(100), SplitSpec("ratio", (0.7, 0.1, 0.2)))
    assert (tr.L, va.L, te.L) == (70, 10, 20)
    np.testing.assert_array_equal(np.concatenate([tr.values, va.values, te.values], 1),
                                  _series(100).values)


def test_split_too_short_names_segment():
    with pytest.raises(DataError, match="validation"):
        split(_series(10), SplitSpec("ratio", (0.6, 0.2, 0.2)), T=8, H=4)


def test_ett_borders_hourly():
    tr, va, te = split(_series(17420), SplitSpec("ett", points_per_hour=1))
    assert (tr.L, va.L, te.L) == (8640, 2880, 2880)
    # Table-style count of lookback start positions in the train segment
    assert tr.L - 96 + 1 == 8545
    assert len(windows(tr, 96, 96)) == 8640 - 96 - 96 + 1
    # val/test borrow their lookback from the preceding segment
    assert len(windows(va, 96, 96, allow_overhang=True)) == 2880 - 96 + 1


def test_ett_borders_15min():
    tr, va, te = split(_series(69680), SplitSpec("ett", points_per_hour=4))
    assert (tr.L, va.L, te.L) == (34560, 11520, 11520)


@given(L=st.integers(3, 5000), a=st.floats(0.05, 0.9), b=st.floats(0.0, 0.5))
def test_ratio_split_partitions(L, a, b):
    b = min(b, 1 - a)
    spec = SplitSpec("ratio", (a, b, 1 - a - b))
    parts = split(_series(L), spec)
    assert sum(p.L for p in parts) == L
    assert parts[0].L == int(np.floor(L * a))


def test_window_enumeration():
    seg = _series(10)
    ws = windows(seg, 4, 2)
    assert len(ws) == 5
    assert list(ws.origins) == [4, 5, 6, 7, 8]
    w = ws[0]
    np.testing.assert_array_equal(w.lookback, [[0, 1, 2, 3]])
    np.testing.assert_array_equal(w.target, [[4, 5]])
    assert w.origin_index == 4
    assert len(windows(_series(6), 4, 2)) == 1
    with pytest.raises(DataError):
        windows(_series(5), 4, 2)


@given(S=st.integers(2, 60), T=st.integers(1, 20), H=st.integers(1, 20))
def test_window_count_is_exhaustive(S, T, H):
    seg = _series(S)
    n = S - T - H + 1
    if n < 1:
        with pytest.raises(DataError):
            windows(seg, T, H)
        return
    ws = windows(seg, T, H)
    assert len(ws) == n
    for i in (0, n - 1):
        w = ws[i]
        # lookback's last point immediately precedes the first target point
        assert w.target[0, 0] == w.lookback[0, -1] + 1


def test_overhang_windows_reach_into_context():
    tr, va, te = split(_series(30), SplitSpec("ratio", (0.5, 0.25, 0.25)))
    ws = windows(va, 4, 2, allow_overhang=True)
    w = ws[0]
    assert w.origin_index == 0
    np.testing.assert_array_equal(w.lookback, [[11, 12, 13, 14]])
    np.testing.assert_array_equal(w.target, [[15, 16]])
    assert len(ws) == va.L - 2 + 1


def test_batch_and_samples_agree_with_indexing():
    seg = _series(40, D=3)
    ws = windows(seg, 8, 4)
    x, y = ws.batch([2, 5])
    np.testing.assert_array_equal(x[1], ws[5].lookback)
    np.testing.assert_array_equal(y[0], ws[2].target)
    xs, ys = ws.samples([3 * 5 + 2])
    np.testing.assert_array_equal(xs[0], ws[5].lookback[2])
    np.testing.assert_array_equal(ys[0], ws[5].target[2])


def test_normalize_closed_form():
    z, stats = normalize(np.array([[1.0, 2.0, 3.0]]))
    assert stats.mean[0] == pytest.approx(2.0)
    assert stats.std[0] == pytest.approx(np.sqrt(2.0 / 3.0))
    assert stats.std[0] == pytest.approx(0.816497, abs=1e-6)
    np.testing.assert_allclose(z[0], [-1.224745, 0.0, 1.224745], atol=1e-6)


def test_normalize_constant_row():
    z, stats = normalize(np.array([[5.0, 5.0, 5.0]]))
    np.testing.assert_array_equal(z, 0.0)
    assert stats.std[0] == EPS


@settings(max_examples=50)
@given(seed=st.integers(0, 10_000), D=st.integers(1, 5), T=st.integers(2, 64))
def test_normalize_round_trip(seed, D, T):
    x = np.random.default_rng(seed).normal(scale=10, size=(D, T)) + 3
    z, stats = normalize(x)
    back = denormalize(z, stats)
    assert np.max(np.abs(back - x) / np.maximum(np.abs(x), 1e-12)) <= 1e-9


def test_normalize_without_centering():
    x = np.array([[1.0, 2.0, 3.0]])
    z, stats = normalize(x, center=False)
    assert stats.mean[0] == 0
    np.testing.assert_allclose(z * stats.std[0], x)


def test_standardizer_uses_train_stats():
    s = _series(100, D=2)
    tr, _, _ = split(s, SplitSpec("ratio", (0.7, 0.1, 0.2)))
    st_ = fit_standardizer(tr)
    np.testing.assert_allclose(st_.mean, tr.values.mean(1))
