"""Encoder-decoder forecaster over correlation attention and graph layers.

Layout conventions: batches are (B, T, N, C); attention runs per sensor over
time in (B, N, L, d_model); the graph layer runs per time step over sensors.
Training uses teacher forcing; inference rolls the decoder autoregressively
from the last observed step.
"""

from __future__ import annotations

import hashlib
import json
import struct
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from . import metrics as metrics_mod
from .autodiff import Module, Parameter, Tensor
from .data import SampleSet, denormalize, iterate_batches
from .errors import ComputeError, ConfigError, DataError, DimensionError
from .neural import (CIATT, CIGNN, LayerNorm, Linear, NormalizedAdjacency,
                     causal_mask)
from .scorr import SCorrTensor, top_u_normalize

_CKPT_MAGIC = b"CSTN"
_CKPT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    encoder_layers: int = 2
    decoder_layers: int = 2
    d_model: int = 32
    heads: int = 4
    top_u: int = 2
    kernel_size: int = 3
    periods: tuple = ("hourly",)
    tau: int = 12
    horizon: int = 12
    learning_rate: float = 0.001
    batch_size: int = 16
    dropout: float = 0.0
    qk_conv: bool = False

    def __post_init__(self):
        for name in ("encoder_layers", "decoder_layers", "d_model", "heads",
                     "top_u", "batch_size", "tau"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.d_model % self.heads != 0:
            raise ConfigError(
                f"d_model {self.d_model} not divisible by heads {self.heads}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError(f"kernel_size must be odd positive, got {self.kernel_size}")
        # the forecasting contract fixes a 12-step horizon
        if self.horizon != 12:
            raise ConfigError(f"horizon is fixed at 12, got {self.horizon}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        periods = tuple(self.periods)
        if "hourly" not in periods or not set(periods) <= {"hourly", "daily", "weekly"}:
            raise ConfigError(f"periods must include hourly, got {periods}")
        object.__setattr__(self, "periods", periods)

    @property
    def encoder_length(self) -> int:
        return len(self.periods) * self.tau

    def to_dict(self) -> dict:
        d = asdict(self)
        d["periods"] = list(self.periods)
        return d

    @classmethod
    def from_dict(cls, payload: dict) -> "ModelConfig":
        payload = dict(payload)
        payload["periods"] = tuple(payload.get("periods", ("hourly",)))
        return cls(**payload)


PRESETS = {
    # appendix-style hyperparameters for the PEMS08 road-traffic benchmark
    "pems08": ModelConfig(encoder_layers=4, decoder_layers=4, d_model=64,
                          heads=8, top_u=4, kernel_size=3, batch_size=16,
                          periods=("hourly", "daily", "weekly"), qk_conv=True),
}


def config_hash(config: ModelConfig) -> bytes:
    canon = json.dumps(config.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(canon).digest()


def save_config(config: ModelConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(config.to_dict(), fh, indent=2)
        fh.write("\n")


def load_config(path) -> ModelConfig:
    with open(path) as fh:
        try:
            return ModelConfig.from_dict(json.load(fh))
        except (TypeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# network

class EncoderLayer(Module):
    def __init__(self, config, topu, scorr, adj, rng):
        kernel = config.kernel_size if config.qk_conv else None
        self.attn = CIATT(config.d_model, config.heads, topu, rng,
                          conv_kernel=kernel, dropout=config.dropout)
        self.norm_attn = LayerNorm(config.d_model)
        self.graph = CIGNN(config.d_model, scorr, adj, rng)
        self.norm_graph = LayerNorm(config.d_model)

    def __call__(self, x, rng=None):
        # x: (B, T, N, d); attention wants (B, N, T, d)
        xa = ad.permute(x, (0, 2, 1, 3))
        att = ad.permute(self.attn(xa, xa, rng=rng), (0, 2, 1, 3))
        x = self.norm_attn(ad.add(x, att))
        x = self.norm_graph(ad.add(x, self.graph(x)))
        return x


class DecoderLayer(Module):
    def __init__(self, config, topu, scorr, adj, rng):
        # the centered Q/K conv reads one step ahead, which in the decoder
        # would let teacher-forced training peek at the label; decoder
        # attention therefore never convolves
        self.self_attn = CIATT(config.d_model, config.heads, topu, rng,
                               dropout=config.dropout)
        self.norm_self = LayerNorm(config.d_model)
        self.cross_attn = CIATT(config.d_model, config.heads, topu, rng,
                                dropout=config.dropout)
        self.norm_cross = LayerNorm(config.d_model)
        self.graph = CIGNN(config.d_model, scorr, adj, rng)
        self.norm_graph = LayerNorm(config.d_model)

    def __call__(self, y, memory, mask, rng=None):
        ya = ad.permute(y, (0, 2, 1, 3))
        att = ad.permute(self.self_attn(ya, ya, mask=mask, rng=rng), (0, 2, 1, 3))
        y = self.norm_self(ad.add(y, att))
        ya = ad.permute(y, (0, 2, 1, 3))
        mem = ad.permute(memory, (0, 2, 1, 3))
        att = ad.permute(self.cross_attn(ya, mem, rng=rng), (0, 2, 1, 3))
        y = self.norm_cross(ad.add(y, att))
        y = self.norm_graph(ad.add(y, self.graph(y)))
        return y


class CorrSTN(Module):
    """Correlation-informed spatiotemporal transformer."""

    def __init__(self, config: ModelConfig, scorr: SCorrTensor,
                 adj: NormalizedAdjacency, n_sensors: int, seed: int = 0):
        if scorr.n_sensors != n_sensors:
            raise DimensionError(
                f"scorr is for {scorr.n_sensors} sensors, expected {n_sensors}")
        if adj.matrix.shape != (n_sensors, n_sensors):
            raise DimensionError(
                f"adjacency {adj.matrix.shape} vs {n_sensors} sensors")
        if config.top_u > n_sensors:
            raise ConfigError(f"top_u {config.top_u} exceeds {n_sensors} sensors")
        rng = np.random.default_rng(seed)
        n_attr = scorr.n_attributes
        d = config.d_model
        self.config = config
        self.n_sensors = n_sensors
        self.n_attributes = n_attr
        self.topu = top_u_normalize(scorr, config.top_u)
        self.enc_proj = Linear(n_attr, d, rng)
        self.dec_proj = Linear(n_attr, d, rng)
        self.spatial_emb = Parameter(ad.xavier_uniform(rng, (n_sensors, d), d, d))
        self.enc_pos = Parameter(ad.xavier_uniform(rng, (config.encoder_length, d), d, d))
        self.dec_pos = Parameter(ad.xavier_uniform(rng, (config.horizon, d), d, d))
        self.encoder = [EncoderLayer(config, self.topu, scorr, adj, rng)
                        for _ in range(config.encoder_layers)]
        self.decoder = [DecoderLayer(config, self.topu, scorr, adj, rng)
                        for _ in range(config.decoder_layers)]
        self.head = Linear(d, 1, rng)
        self.training = False
        self._rng = np.random.default_rng(seed + 1)

    def _embed(self, raw, proj, pos: Parameter, length: int) -> Tensor:
        x = proj(Tensor(raw))
        pos_slice = ad.narrow(pos, 0, 0, length)
        pos_bcast = ad.reshape(pos_slice, (length, 1, pos.shape[1]))
        return ad.add(ad.add(x, self.spatial_emb), pos_bcast)

    def _check_input(self, arr, length, what):
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 3:
            arr = arr[None]
        if arr.ndim != 4 or arr.shape[2] != self.n_sensors \
                or arr.shape[3] != self.n_attributes:
            raise DimensionError(
                f"{what} must be (B, {length}, {self.n_sensors}, "
                f"{self.n_attributes}), got {arr.shape}")
        if arr.shape[1] != length:
            raise DimensionError(
                f"{what} length {arr.shape[1]} != expected {length}")
        return arr

    def forward(self, encoder_input, decoder_input) -> Tensor:
        """Teacher-forced pass. decoder_input may be any length 1..horizon;
        outputs align one step ahead of decoder positions."""
        enc = self._check_input(encoder_input, self.config.encoder_length,
                                "encoder input")
        dec = np.asarray(decoder_input, dtype=np.float64)
        if dec.ndim == 3:
            dec = dec[None]
        if dec.ndim != 4 or not 1 <= dec.shape[1] <= self.config.horizon \
                or dec.shape[2] != self.n_sensors or dec.shape[3] != self.n_attributes:
            raise DimensionError(
                f"decoder input must be (B, 1..{self.config.horizon}, "
                f"{self.n_sensors}, {self.n_attributes}), got {dec.shape}")
        rng = self._rng if self.training else None
        x = self._embed(enc, self.enc_proj, self.enc_pos, enc.shape[1])
        for layer in self.encoder:
            x = layer(x, rng=rng)
        mask = causal_mask(dec.shape[1])
        y = self._embed(dec, self.dec_proj, self.dec_pos, dec.shape[1])
        for layer in self.decoder:
            y = layer(y, x, mask, rng=rng)
        return self.head(y)

    def forecast(self, encoder_input, chunk: int = 64) -> np.ndarray:
        """Autoregressive rollout, normalized space, shape (B, L, N, 1).

        The decoder starts from the last encoder timestamp (the current
        observation); predictions fill attribute 0 of the next step and the
        remaining attributes are held at their last observed values.
        """
        enc = self._check_input(encoder_input, self.config.encoder_length,
                                "encoder input")
        was_training = self.training
        self.set_training(False)
        horizon = self.config.horizon
        outputs = np.empty((enc.shape[0], horizon, self.n_sensors, 1))
        for start in range(0, enc.shape[0], chunk):
            block = enc[start:start + chunk]
            dec = block[:, -1:].copy()
            for step in range(horizon):
                pred = self.forward(block, dec).data
                outputs[start:start + block.shape[0], step] = pred[:, -1]
                if step + 1 < horizon:
                    nxt = dec[:, -1:].copy()
                    nxt[:, 0, :, 0] = pred[:, -1, :, 0]
                    dec = np.concatenate([dec, nxt], axis=1)
        self.set_training(was_training)
        return outputs

    def state_dict(self) -> dict:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict) -> None:
        own = dict(self.named_parameters())
        if set(own) != set(state):
            missing = set(own) - set(state)
            extra = set(state) - set(own)
            raise DataError(f"state mismatch: missing {sorted(missing)}, "
                            f"unexpected {sorted(extra)}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise DimensionError(
                    f"{name}: shape {arr.shape} != {p.data.shape}")
            p.data = arr.copy()


def build_model(config: ModelConfig, scorr: SCorrTensor, adj: NormalizedAdjacency,
                n_sensors: int, seed: int = 0) -> CorrSTN:
    return CorrSTN(config, scorr, adj, n_sensors, seed=seed)


# ---------------------------------------------------------------------------
# optimization

class Adam:
    def __init__(self, params, lr: float = 0.001, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self._m, self._v):
            if p.grad is None:
                continue
            g = p.grad
            m += (1.0 - self.beta1) * (g - m)
            v += (1.0 - self.beta2) * (g * g - v)
            p.data = p.data - self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def mae_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    if pred.shape != target.shape:
        raise DimensionError(f"loss shapes: pred {pred.shape}, target {target.shape}")
    return ad.mean(ad.abs_(ad.sub(pred, Tensor(target))))


# ---------------------------------------------------------------------------
# training

@dataclass
class TrainingData:
    train: SampleSet
    val: SampleSet
    norm_params: np.ndarray


@dataclass
class EpochRow:
    epoch: int
    train_mae: float
    val_mae: float
    val_rmse: float
    val_mape: float
    seconds: float


@dataclass
class TrainingLog:
    rows: list = field(default_factory=list)
    best_epoch: int = -1
    best_val_mae: float = float("inf")
    stopped_early: bool = False

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("epoch,train_mae,val_mae,val_rmse,val_mape,seconds\n")
            for r in self.rows:
                fh.write(f"{r.epoch},{r.train_mae!r},{r.val_mae!r},"
                         f"{r.val_rmse!r},{r.val_mape!r},{r.seconds:.3f}\n")


def _teacher_forced_metrics(model, samples: SampleSet, norm_params,
                            chunk: int = 128) -> tuple[float, float, float]:
    preds = []
    for start in range(0, len(samples), chunk):
        out = model.forward(samples.encoder_input[start:start + chunk],
                            samples.decoder_input[start:start + chunk])
        preds.append(out.data)
    pred = denormalize(np.concatenate(preds)[..., 0], norm_params, attribute=0)
    truth = denormalize(samples.target[..., 0], norm_params, attribute=0)
    return (metrics_mod.mae(pred, truth), metrics_mod.rmse(pred, truth),
            metrics_mod.mape(pred, truth))


def train(model: CorrSTN, data: TrainingData, config: ModelConfig,
          epochs: int = 100, patience: int = 20, seed: int = 0,
          log_path=None) -> TrainingLog:
    """MAE loss, Adam, teacher forcing; keeps and restores the parameters of
    the best validation epoch; stops after `patience` epochs without
    improvement. Deterministic for fixed seed and data."""
    if len(data.train) == 0 or len(data.val) == 0:
        raise DataError("empty training or validation sample set")
    rng = np.random.default_rng(seed)
    optimizer = Adam(model.parameters(), lr=config.learning_rate)
    # MAE is linear in scale, so the normalized loss converts exactly
    lo, hi = data.norm_params[0]
    scale = (hi - lo) / 2.0
    log = TrainingLog()
    best_state = model.state_dict()
    since_best = 0
    for epoch in range(1, epochs + 1):
        started = time.perf_counter()
        model.set_training(True)
        loss_sum = 0.0
        seen = 0
        for enc, dec, target in iterate_batches(data.train, config.batch_size, rng):
            model.zero_grad()
            pred = model.forward(enc, dec)
            loss = mae_loss(pred, target)
            if not np.isfinite(loss.data):
                raise ComputeError(
                    f"training diverged: non-finite loss at epoch {epoch}")
            loss.backward()
            optimizer.step()
            loss_sum += float(loss.data) * enc.shape[0]
            seen += enc.shape[0]
        model.set_training(False)
        val_mae, val_rmse, val_mape = _teacher_forced_metrics(
            model, data.val, data.norm_params)
        row = EpochRow(epoch=epoch, train_mae=loss_sum / seen * scale,
                       val_mae=val_mae, val_rmse=val_rmse, val_mape=val_mape,
                       seconds=time.perf_counter() - started)
        log.rows.append(row)
        if val_mae < log.best_val_mae:
            log.best_val_mae = val_mae
            log.best_epoch = epoch
            best_state = model.state_dict()
            since_best = 0
        else:
            since_best += 1
            if since_best >= patience:
                log.stopped_early = True
                break
    model.load_state_dict(best_state)
    if log_path is not None:
        log.to_csv(log_path)
    return log


# ---------------------------------------------------------------------------
# checkpoints

def save_checkpoint(model: CorrSTN, config: ModelConfig, path) -> None:
    """Layout: 'CSTN', version u32, sha256 of the canonical config (32 bytes),
    block count u32, then per parameter: name length u32, utf-8 name,
    ndim u32, extents u32..., little-endian float64 payload."""
    state = model.state_dict()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sI", _CKPT_MAGIC, _CKPT_VERSION))
        fh.write(config_hash(config))
        fh.write(struct.pack("<I", len(state)))
        for name, arr in state.items():
            encoded = name.encode()
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path, config: ModelConfig) -> dict:
    with open(path, "rb") as fh:
        header = fh.read(8)
        if len(header) != 8 or header[:4] != _CKPT_MAGIC:
            raise DataError(f"{path}: not a checkpoint file")
        version = struct.unpack("<I", header[4:])[0]
        if version != _CKPT_VERSION:
            raise DataError(f"{path}: unsupported checkpoint version {version}")
        stored_hash = fh.read(32)
        if stored_hash != config_hash(config):
            raise ConfigError(
                f"{path}: checkpoint was produced by a different model config")
        count = struct.unpack("<I", fh.read(4))[0]
        state = {}
        for _ in range(count):
            name_len = struct.unpack("<I", fh.read(4))[0]
            name = fh.read(name_len).decode()
            ndim = struct.unpack("<I", fh.read(4))[0]
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            size = int(np.prod(shape)) if shape else 1
            payload = np.frombuffer(fh.read(8 * size), dtype="<f8")
            if payload.size != size:
                raise DataError(f"{path}: truncated block {name}")
            state[name] = payload.reshape(shape).copy()
    return state


def predict(model: CorrSTN, encoder_input, norm_params) -> np.ndarray:
    """Denormalized autoregressive forecasts, shape (B, L, N, 1)."""
    if norm_params is None:
        raise ConfigError("normalization parameters are required for prediction")
    out = model.forecast(encoder_input)
    return denormalize(out, np.asarray(norm_params), attribute=0)
