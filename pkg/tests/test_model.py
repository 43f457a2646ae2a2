import numpy as np
import pytest

from corrstn import (Adam, ModelConfig, PRESETS, SCorrTensor, Tensor,
                     TrainingData, add_self_loops, assemble_samples,
                     build_model, config_hash, denormalize, fit_normalization,
                     generate_synthetic, laplacian_normalize, load_checkpoint,
                     load_config, mae_loss, normalize, predict,
                     save_checkpoint, save_config, split_ranges, train)
from corrstn.autodiff import Parameter
from corrstn.data import SpatioTemporalTensor
from corrstn.errors import ConfigError, DataError, DimensionError


def _scorr(n, c, seed=0):
    rng = np.random.default_rng(seed)
    deg = rng.uniform(0.1, 0.9, size=(n, n, c))
    deg = (deg + deg.transpose(1, 0, 2)) / 2
    for a in range(c):
        np.fill_diagonal(deg[:, :, a], 1.0)
    return SCorrTensor(deg)


def _adj(n):
    return laplacian_normalize(add_self_loops(np.ones((n, n)) - np.eye(n)))


_TINY = dict(encoder_layers=1, decoder_layers=1, d_model=8, heads=2, top_u=2,
             periods=("hourly",))


def _tiny_model(seed=1, n=3, c=2, **overrides):
    cfg = ModelConfig(**{**_TINY, **overrides})
    return cfg, build_model(cfg, _scorr(n, c), _adj(n), n, seed=seed)


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(horizon=6)             # the forecast contract is 12 steps
    with pytest.raises(ConfigError):
        ModelConfig(d_model=30, heads=4)
    with pytest.raises(ConfigError):
        ModelConfig(kernel_size=4)
    with pytest.raises(ConfigError):
        ModelConfig(dropout=1.0)
    with pytest.raises(ConfigError):
        ModelConfig(learning_rate=0.0)
    with pytest.raises(ConfigError):
        ModelConfig(periods=("daily",))
    assert ModelConfig(periods=["daily", "hourly"]).periods == ("daily", "hourly")


def test_encoder_length_counts_period_blocks():
    assert ModelConfig(periods=("hourly",)).encoder_length == 12
    assert ModelConfig(periods=("hourly", "daily", "weekly")).encoder_length == 36


def test_pems08_preset():
    cfg = PRESETS["pems08"]
    assert (cfg.encoder_layers, cfg.decoder_layers) == (4, 4)
    assert (cfg.d_model, cfg.heads, cfg.top_u) == (64, 8, 4)
    assert cfg.kernel_size == 3 and cfg.batch_size == 16
    assert cfg.periods == ("hourly", "daily", "weekly")
    assert cfg.qk_conv


def test_config_hash_and_io(tmp_path):
    a = ModelConfig()
    b = ModelConfig()
    c = ModelConfig(d_model=64)
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(c)
    path = tmp_path / "config.json"
    save_config(c, path)
    assert load_config(path) == c
    path.write_text("{broken")
    with pytest.raises(ConfigError):
        load_config(path)


def test_parameter_count_hand_derived():
    _, model = _tiny_model()
    # embeddings: 2 input projections (2*8+8), spatial 3*8, positions 2*12*8
    emb = 2 * 24 + 24 + 192
    attn = 4 * (64 + 8)                     # wq/wk/wv/w_out with bias
    gnn = 64 + 2 + 1                        # w, psi (C=2), omega
    norm = 16
    enc = attn + norm + gnn + norm
    dec = 2 * (attn + norm) + gnn + norm
    head = 8 + 1
    want = emb + enc + dec + head
    got = sum(p.data.size for p in model.parameters())
    assert got == want == 1351


def test_build_is_deterministic_per_seed():
    _, m1 = _tiny_model(seed=4)
    _, m2 = _tiny_model(seed=4)
    _, m3 = _tiny_model(seed=5)
    s1, s2, s3 = m1.state_dict(), m2.state_dict(), m3.state_dict()
    assert all(np.array_equal(s1[k], s2[k]) for k in s1)
    assert any(not np.array_equal(s1[k], s3[k]) for k in s1)


def test_forward_shapes_and_input_checks():
    cfg, model = _tiny_model()
    rng = np.random.default_rng(0)
    enc = rng.normal(size=(2, 12, 3, 2))
    dec = rng.normal(size=(2, 12, 3, 2))
    assert model.forward(enc, dec).shape == (2, 12, 3, 1)
    assert model.forward(enc[0], dec[0]).shape == (1, 12, 3, 1)   # promoted
    assert model.forward(enc, dec[:, :5]).shape == (2, 5, 3, 1)   # short decode
    with pytest.raises(DimensionError):
        model.forward(enc[:, :7], dec)
    with pytest.raises(DimensionError):
        model.forward(enc, dec[:, :, :2])   # wrong sensor count
    with pytest.raises(DimensionError):
        model.forward(enc, np.zeros((2, 13, 3, 2)))


def test_decoder_is_causal_even_with_qk_conv():
    cfg, model = _tiny_model(encoder_layers=2, decoder_layers=2, qk_conv=True)
    rng = np.random.default_rng(3)
    enc = rng.normal(size=(1, 12, 3, 2))
    dec = rng.normal(size=(1, 12, 3, 2))
    base = model.forward(enc, dec).data
    for bump in (1, 5, 11):
        moved = dec.copy()
        moved[:, bump] += 10.0
        diff = np.abs(model.forward(enc, moved).data - base).max(axis=(0, 2, 3))
        assert np.all(diff[:bump] < 1e-12), bump
        assert diff[bump] > 1e-9, bump


def test_forecast_matches_manual_rollout():
    cfg, model = _tiny_model(seed=7)
    rng = np.random.default_rng(8)
    enc = rng.normal(size=(3, 12, 3, 2))
    got = model.forecast(enc)
    assert got.shape == (3, 12, 3, 1)
    dec = enc[:, -1:].copy()
    for step in range(12):
        pred = model.forward(enc, dec).data
        assert np.array_equal(got[:, step], pred[:, -1])
        nxt = dec[:, -1:].copy()
        nxt[:, 0, :, 0] = pred[:, -1, :, 0]
        dec = np.concatenate([dec, nxt], axis=1)[:, :12]
        if dec.shape[1] == 12 and step >= 11:
            break
    assert np.array_equal(model.forecast(enc, chunk=2), got)


def test_state_dict_round_trip_and_mismatch():
    _, model = _tiny_model(seed=9)
    state = model.state_dict()
    _, other = _tiny_model(seed=10)
    other.load_state_dict(state)
    assert all(np.array_equal(a, b) for a, b in
               zip(model.state_dict().values(), other.state_dict().values()))
    bad = dict(state)
    bad.pop("head.weight")
    with pytest.raises(DataError):
        other.load_state_dict(bad)


def test_checkpoint_round_trip(tmp_path):
    cfg, model = _tiny_model(seed=11)
    path = tmp_path / "model.cstn"
    save_checkpoint(model, cfg, path)
    assert path.read_bytes()[:4] == b"CSTN"
    state = load_checkpoint(path, cfg)
    for name, arr in model.state_dict().items():
        assert np.array_equal(state[name], arr)
    with pytest.raises(ConfigError):
        load_checkpoint(path, ModelConfig(**{**_TINY, "d_model": 16}))


def test_adam_single_step_hand_computed():
    p = Parameter(np.array([1.0]))
    opt = Adam([p], lr=0.1)
    p.grad = np.array([0.5])
    opt.step()
    # mhat = 0.5, vhat = 0.25 -> update = 0.1 * 0.5 / (0.5 + 1e-8)
    assert abs(p.data[0] - (1.0 - 0.1 * 0.5 / (0.5 + 1e-8))) < 1e-15


def test_mae_loss_value():
    pred = Tensor(np.array([[1.0, 3.0]]), requires_grad=True)
    loss = mae_loss(pred, np.array([[2.0, 1.0]]))
    assert abs(loss.data - 1.5) < 1e-15
    with pytest.raises(DimensionError):
        mae_loss(pred, np.zeros((2, 2)))


def _training_setup(seed=0):
    ds = generate_synthetic(n_sensors=3, weeks=2, interval_minutes=30,
                            noise_sigma=0.05, seed=seed)
    x = ds.tensor
    ranges = split_ranges(x.n_timestamps)   # 672 -> 403/134/135
    params = fit_normalization(x, ranges[0])
    x_norm = SpatioTemporalTensor(normalize(x.data, params),
                                  interval_minutes=30)
    offsets = {"hourly": 12}
    train_s = assemble_samples(x_norm, (60, 140), ("hourly",), offsets, 12)
    val_s = assemble_samples(x_norm, (140, 180), ("hourly",), offsets, 12)
    return x_norm, params, train_s, val_s


def test_train_improves_and_logs(tmp_path):
    x_norm, params, train_s, val_s = _training_setup()
    cfg, model = _tiny_model(seed=12, n=3, c=1,
                             learning_rate=0.01, batch_size=16)
    log_path = tmp_path / "log.csv"
    log = train(model, TrainingData(train_s, val_s, params), cfg,
                epochs=8, patience=8, seed=0, log_path=log_path)
    assert len(log.rows) == 8
    assert log.rows[-1].val_mae < log.rows[0].val_mae
    assert log.best_val_mae == min(r.val_mae for r in log.rows)
    lines = log_path.read_text().strip().splitlines()
    assert lines[0] == "epoch,train_mae,val_mae,val_rmse,val_mape,seconds"
    assert len(lines) == 9


def test_train_is_deterministic():
    x_norm, params, train_s, val_s = _training_setup()
    results = []
    for _ in range(2):
        cfg, model = _tiny_model(seed=13, n=3, c=1, learning_rate=0.01)
        log = train(model, TrainingData(train_s, val_s, params), cfg,
                    epochs=3, patience=5, seed=1)
        results.append((log.rows[-1].val_mae, model.state_dict()))
    assert results[0][0] == results[1][0]
    assert all(np.array_equal(results[0][1][k], results[1][1][k])
               for k in results[0][1])


def test_train_restores_best_epoch_state():
    x_norm, params, train_s, val_s = _training_setup()
    cfg, model = _tiny_model(seed=14, n=3, c=1, learning_rate=0.02)
    log = train(model, TrainingData(train_s, val_s, params), cfg,
                epochs=6, patience=6, seed=2)
    from corrstn.model import _teacher_forced_metrics
    val_mae, _, _ = _teacher_forced_metrics(model, val_s, params)
    assert abs(val_mae - log.best_val_mae) < 1e-12


def test_train_early_stops():
    x_norm, params, train_s, val_s = _training_setup()
    # lr large enough that validation oscillates instead of improving
    cfg, model = _tiny_model(seed=15, n=3, c=1, learning_rate=1.0)
    log = train(model, TrainingData(train_s, val_s, params), cfg,
                epochs=50, patience=2, seed=3)
    assert log.stopped_early
    assert len(log.rows) < 50


def test_predict_denormalizes():
    x_norm, params, train_s, val_s = _training_setup()
    cfg, model = _tiny_model(seed=16, n=3, c=1)
    enc = train_s.encoder_input[:4]
    raw = model.forecast(enc)
    out = predict(model, enc, params)
    assert np.allclose(out, denormalize(raw, params, attribute=0), atol=1e-15)
    with pytest.raises(ConfigError):
        predict(model, enc, None)
