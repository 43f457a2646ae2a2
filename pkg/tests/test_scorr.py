import math

import numpy as np
import pytest

from corrstn import (SCorrTensor, SpatioTemporalTensor, compute_scorr,
                     export_scorr_csv, identity_topu, load_scorr, mic,
                     save_scorr, top_u_normalize, topu_mixing_matrix,
                     windowed_scorr)
from corrstn.errors import ConfigError, DataError, DimensionError


def _make_tensor(t=96, n=5, c=2, seed=0):
    rng = np.random.default_rng(seed)
    base = rng.normal(size=(t, 1, c))
    data = base + 0.5 * rng.normal(size=(t, n, c))
    return SpatioTemporalTensor(data, interval_minutes=5)


def test_scorr_tensor_validation():
    with pytest.raises(DimensionError):
        SCorrTensor(np.zeros((3, 4, 2)))
    with pytest.raises(DataError):
        SCorrTensor(np.full((3, 3, 1), 1.5))


def test_compute_scorr_structure():
    x = _make_tensor()
    s = compute_scorr(x)
    n, c = x.data.shape[1], x.data.shape[2]
    assert s.degrees.shape == (n, n, c)
    for attr in range(c):
        sl = s.degrees[:, :, attr]
        assert np.array_equal(sl, sl.T)
        assert np.array_equal(np.diag(sl), np.ones(n))
        assert sl.min() >= 0.0 and sl.max() <= 1.0


def test_compute_scorr_matches_direct_mic():
    x = _make_tensor(t=64, n=4, c=1, seed=2)
    s = compute_scorr(x)
    for i in range(4):
        for j in range(4):
            if i != j:
                want = mic(x.data[:, i, 0], x.data[:, j, 0])
                assert s.degrees[i, j, 0] == want


def test_compute_scorr_serial_parallel_identical():
    x = _make_tensor(t=72, n=6, c=2, seed=4)
    assert np.array_equal(compute_scorr(x, workers=1).degrees,
                          compute_scorr(x, workers=3).degrees)


def test_windowed_scorr_positions():
    x = _make_tensor(t=50, n=3, c=1)
    tensors = windowed_scorr(x, window=20, stride=10)
    # starts 0, 10, 20, 30 all fit a 20-step window into 50 steps
    assert len(tensors) == 4
    direct = compute_scorr(SpatioTemporalTensor(x.data[10:30],
                                                interval_minutes=5))
    assert np.array_equal(tensors[1].degrees, direct.degrees)


def test_top_u_normalize_selects_largest():
    degrees = np.zeros((4, 4, 1))
    vals = np.array([[1.0, 0.9, 0.2, 0.5],
                     [0.9, 1.0, 0.8, 0.1],
                     [0.2, 0.8, 1.0, 0.7],
                     [0.5, 0.1, 0.7, 1.0]])
    degrees[:, :, 0] = vals
    topu = top_u_normalize(SCorrTensor(degrees), u=2)
    assert topu.indices.shape == (4, 2, 1)
    assert topu.weights.shape == (4, 2, 1)
    # row 0: self (1.0) then sensor 1 (0.9)
    assert topu.indices[0, :, 0].tolist() == [0, 1]
    assert topu.indices[3, :, 0].tolist() == [3, 2]
    # softmax over the selected degrees
    e = np.exp([1.0, 0.9])
    want = e / e.sum()
    assert np.allclose(topu.weights[0, :, 0], want, atol=1e-15)
    assert np.allclose(topu.weights.sum(axis=1), 1.0, atol=1e-12)


def test_top_u_normalize_tie_breaks_to_lower_index():
    degrees = np.ones((3, 3, 1)) * 0.5
    for i in range(3):
        degrees[i, i, 0] = 1.0
    topu = top_u_normalize(SCorrTensor(degrees), u=2)
    # all off-diagonal degrees tie at 0.5; the lower sensor index wins
    assert topu.indices[2, :, 0].tolist() == [2, 0]


def test_top_u_validation():
    s = SCorrTensor(np.tile(np.eye(3)[:, :, None], (1, 1, 2)))
    with pytest.raises(ConfigError):
        top_u_normalize(s, u=4)
    with pytest.raises(ConfigError):
        top_u_normalize(s, u=0)


def test_mixing_matrix_rows_sum_to_one():
    x = _make_tensor(t=60, n=5, c=3, seed=9)
    topu = top_u_normalize(compute_scorr(x), u=3)
    r = topu_mixing_matrix(topu)
    assert r.shape == (5, 5)
    assert np.allclose(r.sum(axis=1), 1.0, atol=1e-12)


def test_mixing_matrix_averages_attributes():
    degrees = np.ones((2, 2, 2))
    degrees[0, 1, 0] = 0.2    # attr 0 prefers self, attr 1 ties
    topu = top_u_normalize(SCorrTensor(degrees), u=1)
    r = topu_mixing_matrix(topu)
    # attr 0 row 0 selects sensor 0; attr 1 ties 0 vs 1 -> lower index 0
    assert r[0, 0] == 1.0 and r[0, 1] == 0.0


def test_identity_topu_is_noop():
    r = topu_mixing_matrix(identity_topu(6, c=3))
    assert np.array_equal(r, np.eye(6))
    keys = np.random.default_rng(0).normal(size=(6, 4))
    assert np.array_equal(r @ keys, keys)


def test_save_load_round_trip(tmp_path):
    s = compute_scorr(_make_tensor(t=48, n=4, c=2, seed=5))
    path = tmp_path / "corr.scor"
    save_scorr(s, path)
    loaded = load_scorr(path)
    assert np.array_equal(loaded.degrees, s.degrees)


def test_load_rejects_wrong_magic(tmp_path):
    path = tmp_path / "bad.scor"
    path.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(DataError):
        load_scorr(path)


def test_csv_export_round_trips_values(tmp_path):
    s = compute_scorr(_make_tensor(t=48, n=3, c=2, seed=6))
    path = tmp_path / "corr.csv"
    export_scorr_csv(s, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "sensor_i,sensor_j,attribute,degree"
    assert len(lines) == 1 + 3 * 3 * 2
    for line in lines[1:]:
        i, j, c, v = line.split(",")
        assert float(v) == s.degrees[int(i), int(j), int(c)]
