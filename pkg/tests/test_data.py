import numpy as np
import pytest

from corrstn import (SpatioTemporalTensor, assemble_samples, denormalize,
                     fit_normalization, generate_synthetic, load_dataset,
                     load_edges, load_tensor, normalize, sample_count,
                     save_tensor, save_tensor_csv, split_ranges)
from corrstn.data import iterate_batches
from corrstn.errors import ConfigError, DataError, DimensionError


def _tensor(t=40, n=3, c=2, seed=0):
    data = np.random.default_rng(seed).normal(size=(t, n, c)) * 5 + 10
    return SpatioTemporalTensor(data, interval_minutes=5)


def test_tensor_validation():
    with pytest.raises(DimensionError):
        SpatioTemporalTensor(np.zeros((4, 3)))
    with pytest.raises(DataError):
        SpatioTemporalTensor(np.full((2, 2, 1), np.nan))
    with pytest.raises(ConfigError):
        SpatioTemporalTensor(np.zeros((2, 2, 1)), interval_minutes=0)


def test_binary_round_trip(tmp_path):
    x = _tensor()
    path = tmp_path / "series.sttf"
    save_tensor(x, path)
    loaded = load_tensor(path)
    assert loaded.interval_minutes == 5
    assert np.array_equal(loaded.data, x.data)
    # header: magic, version, T, N, C, interval as little-endian u32
    raw = path.read_bytes()
    assert raw[:4] == b"STTF"
    assert int.from_bytes(raw[8:12], "little") == 40
    assert len(raw) == 24 + 40 * 3 * 2 * 8


def test_binary_rejects_corrupt_header(tmp_path):
    path = tmp_path / "bad.sttf"
    path.write_bytes(b"XXXX" + b"\x00" * 40)
    with pytest.raises(DataError):
        load_tensor(path)
    truncated = tmp_path / "short.sttf"
    save_tensor(_tensor(), truncated)
    blob = truncated.read_bytes()
    truncated.write_bytes(blob[:-8])
    with pytest.raises(DataError):
        load_tensor(truncated)


def test_csv_round_trip_and_sensor_ordering(tmp_path):
    x = _tensor(t=6, n=3, c=2)
    path = tmp_path / "series.csv"
    save_tensor_csv(x, path, sensor_ids=["s10", "s2", "s1"])
    ds = load_dataset(path)
    # lexicographic: s1 < s10 < s2 -> columns permuted vs original 0,1,2
    assert ds.sensor_ids == ["s1", "s10", "s2"]
    assert np.array_equal(ds.tensor.data[:, 0], x.data[:, 2])
    assert np.array_equal(ds.tensor.data[:, 1], x.data[:, 0])
    assert np.array_equal(ds.tensor.data[:, 2], x.data[:, 1])


def test_csv_missing_combination(tmp_path):
    path = tmp_path / "holes.csv"
    path.write_text("timestamp,sensor,attr0\n0,a,1.0\n0,b,2.0\n1,a,3.0\n")
    with pytest.raises(DataError):
        load_dataset(path)


def test_edges_undirected_default(tmp_path):
    path = tmp_path / "edges.csv"
    path.write_text("from,to,weight\na,b,2.0\nb,c,0.5\n")
    adj = load_edges(path, ["a", "b", "c"])
    assert adj[0, 1] == 2.0 and adj[1, 0] == 2.0
    assert adj[1, 2] == 0.5 and adj[2, 1] == 0.5
    assert adj[0, 2] == 0.0


def test_edges_directed_flag_and_errors(tmp_path):
    path = tmp_path / "edges.csv"
    path.write_text("# directed=true\nfrom,to\na,b\n")
    adj = load_edges(path, ["a", "b"])
    assert adj[0, 1] == 1.0 and adj[1, 0] == 0.0
    bad = tmp_path / "bad.csv"
    bad.write_text("from,to\na,zzz\n")
    with pytest.raises(DataError):
        load_edges(bad, ["a", "b"])


def test_split_ranges_truncation():
    assert split_ranges(100) == ((0, 60), (60, 80), (80, 100))
    # 6:2:2 with awkward totals: boundaries truncate, test gets the remainder
    assert split_ranges(17) == ((0, 10), (10, 13), (13, 17))
    with pytest.raises(ConfigError):
        split_ranges(10, (0.5, 0.2, 0.2))


def test_normalize_round_trip_and_train_only_fit():
    x = _tensor(t=50, n=2, c=2, seed=3)
    params = fit_normalization(x, (0, 30))
    assert params.shape == (2, 2)
    scaled = normalize(x.data, params)
    train = scaled[:30]
    # train block exactly fills [-1, 1]; later rows may exceed it
    assert abs(train.min() + 1.0) < 1e-12 and abs(train.max() - 1.0) < 1e-12
    assert np.allclose(denormalize(scaled, params), x.data, atol=1e-12)
    flat = x.data.copy()
    flat[:, :, 1] = 7.0
    with pytest.raises(DataError):
        fit_normalization(SpatioTemporalTensor(flat), (0, 30))


def test_assemble_samples_alignment():
    x = _tensor(t=60, n=2, c=2, seed=4)
    offsets = {"hourly": 4, "daily": 16}
    got = assemble_samples(x, (20, 40), ("hourly", "daily"), offsets, horizon=4)
    # anchors: first 19 (split start - 1), last 35 (39 - horizon)
    assert got.anchors[0] == 19 and got.anchors[-1] == 35
    assert len(got) == sample_count((20, 40), 16, 4)
    assert got.periods == ("daily", "hourly")   # slow block first
    t = int(got.anchors[0])
    daily = x.data[t - 16 + 1:t - 16 + 5]
    hourly = x.data[t - 4 + 1:t - 4 + 5]
    assert np.array_equal(got.encoder_input[0, :4], daily)
    assert np.array_equal(got.encoder_input[0, 4:], hourly)
    assert np.array_equal(got.decoder_input[0], x.data[t:t + 4])
    assert np.array_equal(got.target[0], x.data[t + 1:t + 5, :, :1])


def test_assemble_samples_guards():
    x = _tensor(t=30)
    with pytest.raises(ConfigError):
        assemble_samples(x, (0, 30), ("daily",), {"daily": 10}, 4)
    with pytest.raises(ConfigError):
        assemble_samples(x, (0, 30), ("hourly",), {"hourly": 2}, 4)
    with pytest.raises(DataError):
        assemble_samples(x, (0, 8), ("hourly",), {"hourly": 12}, 4)


def test_iterate_batches_cover_everything():
    x = _tensor(t=40)
    samples = assemble_samples(x, (10, 38), ("hourly",), {"hourly": 6}, 3)
    seen = []
    for enc, dec, tgt in iterate_batches(samples, 4, np.random.default_rng(0)):
        assert enc.shape[0] == dec.shape[0] == tgt.shape[0] <= 4
        seen.extend(enc[:, 0, 0, 0].tolist())
    assert sorted(seen) == sorted(samples.encoder_input[:, 0, 0, 0].tolist())


def test_synthetic_determinism_and_shape():
    a = generate_synthetic(n_sensors=4, weeks=2, seed=5)
    b = generate_synthetic(n_sensors=4, weeks=2, seed=5)
    c = generate_synthetic(n_sensors=4, weeks=2, seed=6)
    assert np.array_equal(a.tensor.data, b.tensor.data)
    assert not np.array_equal(a.tensor.data, c.tensor.data)
    assert a.tensor.data.shape == (2 * 7 * 288, 4, 1)
    with pytest.raises(ConfigError):
        generate_synthetic(n_sensors=4, weeks=1)


def test_synthetic_ring_adjacency():
    ds = generate_synthetic(n_sensors=5, weeks=2, seed=0)
    adj = ds.adjacency
    assert np.array_equal(adj, adj.T)
    for i in range(5):
        assert adj[i, (i + 1) % 5] == 1.0
        assert adj[i, i] == 0.0
    assert adj.sum() == 10.0


def test_synthetic_daily_signal_dominates():
    ds = generate_synthetic(n_sensors=3, weeks=2, daily_amplitude=1.0,
                            weekly_amplitude=0.0, noise_sigma=0.05, seed=1)
    series = ds.tensor.data[:, 0, 0]
    day = 288
    # day-over-day correlation far above half-day correlation
    daily_corr = np.corrcoef(series[:-day], series[day:])[0, 1]
    offset_corr = np.corrcoef(series[:-(day // 2)], series[day // 2:])[0, 1]
    assert daily_corr > 0.9
    assert daily_corr > offset_corr + 0.3
