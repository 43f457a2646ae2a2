"""Dataset ingestion, normalization, splitting, sample assembly, synthesis.

Binary series layout (.sttf): 'STTF', version u32, T u32, N u32, C u32,
interval_minutes u32, then timestamp-major little-endian float64 values.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, DataError, DimensionError

_STTF_MAGIC = b"STTF"
_STTF_VERSION = 1


@dataclass
class SpatioTemporalTensor:
    """T x N x C float64 block: timestamps x sensors x attributes."""

    data: np.ndarray
    interval_minutes: int = 5

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3:
            raise DimensionError(f"expected T x N x C, got shape {self.data.shape}")
        if min(self.data.shape) < 1:
            raise DimensionError(f"empty axis in shape {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise DataError("series contains NaN or infinite values")
        if self.interval_minutes < 1:
            raise ConfigError(f"interval_minutes must be >= 1, got {self.interval_minutes}")

    @property
    def n_timestamps(self) -> int:
        return self.data.shape[0]

    @property
    def n_sensors(self) -> int:
        return self.data.shape[1]

    @property
    def n_attributes(self) -> int:
        return self.data.shape[2]


@dataclass
class TrafficDataset:
    tensor: SpatioTemporalTensor
    adjacency: np.ndarray
    sensor_ids: list[str] = field(default_factory=list)
    # per-attribute (min, max) fitted on the training split; None until fitted
    norm_params: Optional[np.ndarray] = None
    name: str = ""

    def __post_init__(self):
        n = self.tensor.n_sensors
        self.adjacency = np.asarray(self.adjacency, dtype=np.float64)
        if self.adjacency.shape != (n, n):
            raise DimensionError(
                f"adjacency must be {n} x {n}, got {self.adjacency.shape}")
        if not self.sensor_ids:
            self.sensor_ids = [str(i) for i in range(n)]
        if len(self.sensor_ids) != n:
            raise DataError(f"{len(self.sensor_ids)} sensor ids for {n} sensors")


# ---------------------------------------------------------------------------
# series IO

def save_tensor(x: SpatioTemporalTensor, path) -> None:
    t, n, c = x.data.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIIIII", _STTF_MAGIC, _STTF_VERSION, t, n, c,
                             x.interval_minutes))
        fh.write(np.ascontiguousarray(x.data, dtype="<f8").tobytes())


def load_tensor(path) -> SpatioTemporalTensor:
    path = str(path)
    if path.endswith(".csv"):
        return _load_tensor_csv(path)[0]
    with open(path, "rb") as fh:
        header = fh.read(24)
        if len(header) != 24 or header[:4] != _STTF_MAGIC:
            raise DataError(f"{path}: not an STTF file")
        _, version, t, n, c, interval = struct.unpack("<4sIIIII", header)
        if version != _STTF_VERSION:
            raise DataError(f"{path}: unsupported STTF version {version}")
        raw = np.frombuffer(fh.read(), dtype="<f8")
    if raw.size != t * n * c:
        raise DataError(f"{path}: expected {t * n * c} values, got {raw.size}")
    return SpatioTemporalTensor(raw.reshape(t, n, c).copy(), interval_minutes=interval)


def _load_tensor_csv(path) -> tuple[SpatioTemporalTensor, list[str]]:
    """CSV rows: timestamp,sensor,attr0[,attr1...]. Sensors are ordered by id
    (lexicographic) so the layout does not depend on row order."""
    rows = []
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if len(header) < 3 or header[0] != "timestamp" or header[1] != "sensor":
            raise DataError(f"{path}: expected header timestamp,sensor,attr...")
        n_attr = len(header) - 2
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2 + n_attr:
                raise DataError(f"{path}:{lineno}: expected {2 + n_attr} fields")
            try:
                rows.append((int(parts[0]), parts[1], [float(v) for v in parts[2:]]))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: no data rows")
    sensor_ids = sorted({r[1] for r in rows})
    sensor_pos = {s: i for i, s in enumerate(sensor_ids)}
    n_t = max(r[0] for r in rows) + 1
    if min(r[0] for r in rows) < 0:
        raise DataError(f"{path}: negative timestamp")
    data = np.full((n_t, len(sensor_ids), n_attr), np.nan)
    for t, sensor, values in rows:
        data[t, sensor_pos[sensor], :] = values
    if np.isnan(data).any():
        raise DataError(f"{path}: missing (timestamp, sensor) combinations")
    return SpatioTemporalTensor(data), sensor_ids


def save_tensor_csv(x: SpatioTemporalTensor, path, sensor_ids=None) -> None:
    t, n, c = x.data.shape
    ids = sensor_ids or [str(i) for i in range(n)]
    with open(path, "w") as fh:
        fh.write("timestamp,sensor," + ",".join(f"attr{k}" for k in range(c)) + "\n")
        for ti in range(t):
            for ni in range(n):
                vals = ",".join(repr(float(v)) for v in x.data[ti, ni])
                fh.write(f"{ti},{ids[ni]},{vals}\n")


def load_edges(path, sensor_ids: list[str]) -> np.ndarray:
    """Edge list CSV: from,to[,weight]. A '# directed=true|false' comment line
    before the header controls symmetrization (default: undirected)."""
    pos = {s: i for i, s in enumerate(sensor_ids)}
    adj = np.zeros((len(sensor_ids), len(sensor_ids)), dtype=np.float64)
    directed = False
    saw_header = False
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                flag = line[1:].replace(" ", "").lower()
                if flag.startswith("directed="):
                    value = flag.split("=", 1)[1]
                    if value not in ("true", "false"):
                        raise DataError(f"{path}:{lineno}: directed must be true or false")
                    directed = value == "true"
                continue
            if not saw_header:
                saw_header = True
                fields = line.split(",")
                if fields[0] != "from" or fields[1] != "to":
                    raise DataError(f"{path}:{lineno}: expected header from,to[,weight]")
                continue
            parts = line.split(",")
            if len(parts) not in (2, 3):
                raise DataError(f"{path}:{lineno}: expected 2 or 3 fields")
            src, dst = parts[0], parts[1]
            if src not in pos or dst not in pos:
                raise DataError(f"{path}:{lineno}: unknown sensor in edge {src}->{dst}")
            try:
                weight = float(parts[2]) if len(parts) == 3 else 1.0
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad weight") from exc
            adj[pos[src], pos[dst]] = weight
            if not directed:
                adj[pos[dst], pos[src]] = weight
    if not saw_header:
        raise DataError(f"{path}: empty edge file")
    return adj


def load_dataset(tensor_path, edges_path=None, name: str = "") -> TrafficDataset:
    tensor_path = str(tensor_path)
    if tensor_path.endswith(".csv"):
        tensor, sensor_ids = _load_tensor_csv(tensor_path)
    else:
        tensor = load_tensor(tensor_path)
        sensor_ids = [str(i) for i in range(tensor.n_sensors)]
    if edges_path is not None:
        adjacency = load_edges(edges_path, sensor_ids)
    else:
        adjacency = np.zeros((tensor.n_sensors, tensor.n_sensors))
    return TrafficDataset(tensor=tensor, adjacency=adjacency,
                          sensor_ids=sensor_ids, name=name)


# ---------------------------------------------------------------------------
# normalization and splitting

def split_ranges(n_timestamps: int,
                 ratios=(0.6, 0.2, 0.2)) -> tuple[tuple[int, int], ...]:
    """Contiguous (start, end) half-open index ranges for train/val/test."""
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ConfigError(f"need three positive ratios, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must sum to 1, got {sum(ratios)}")
    b1 = int(n_timestamps * ratios[0])
    b2 = int(n_timestamps * (ratios[0] + ratios[1]))
    if not 0 < b1 < b2 < n_timestamps:
        raise DataError(f"{n_timestamps} timestamps cannot be split {ratios}")
    return (0, b1), (b1, b2), (b2, n_timestamps)


def fit_normalization(x: SpatioTemporalTensor, train_range: tuple[int, int]) -> np.ndarray:
    """Per-attribute (min, max) over training rows only, shape (C, 2)."""
    s0, s1 = train_range
    block = x.data[s0:s1]
    lo = block.min(axis=(0, 1))
    hi = block.max(axis=(0, 1))
    if np.any(hi - lo <= 0):
        flat = int(np.argmax(hi - lo <= 0))
        raise DataError(f"attribute {flat} is constant on the training split")
    return np.stack([lo, hi], axis=1)


def normalize(values: np.ndarray, norm_params: np.ndarray) -> np.ndarray:
    """Map each attribute (last axis) to [-1, 1] via 2*(x-min)/(max-min) - 1."""
    lo = norm_params[:, 0]
    hi = norm_params[:, 1]
    return 2.0 * (values - lo) / (hi - lo) - 1.0


def denormalize(values: np.ndarray, norm_params: np.ndarray,
                attribute: Optional[int] = None) -> np.ndarray:
    if attribute is None:
        lo, hi = norm_params[:, 0], norm_params[:, 1]
    else:
        lo, hi = norm_params[attribute]
    return (values + 1.0) * (hi - lo) / 2.0 + lo


# ---------------------------------------------------------------------------
# sample assembly

@dataclass
class SampleSet:
    """Stacked training samples. encoder_input is the concatenation of the
    selected period blocks in slow-to-fast order (weekly, daily, hourly).
    decoder_input covers [t, t+L-1]; target holds attribute 0 over [t+1, t+L]."""

    encoder_input: np.ndarray   # (S, T_enc, N, C)
    decoder_input: np.ndarray   # (S, L, N, C)
    target: np.ndarray          # (S, L, N, 1)
    anchors: np.ndarray         # (S,) anchor timestamps
    periods: tuple[str, ...]

    def __len__(self) -> int:
        return self.encoder_input.shape[0]


_PERIOD_RANK = {"weekly": 0, "daily": 1, "hourly": 2}


def assemble_samples(x: SpatioTemporalTensor, split_range: tuple[int, int],
                     periods, offsets: dict, horizon: int) -> SampleSet:
    """Build every sample whose target block lies inside split_range.

    Lookback windows may reach back across the split boundary (into earlier
    data); targets may not. Sample anchors advance one timestamp at a time.
    """
    if horizon < 1:
        raise ConfigError(f"horizon must be >= 1, got {horizon}")
    periods = tuple(sorted(set(periods), key=lambda p: _PERIOD_RANK[p]))
    if "hourly" not in periods:
        raise ConfigError("encoder input must include the hourly block")
    for p in periods:
        if p not in offsets:
            raise ConfigError(f"no offset for period {p!r}")
        if offsets[p] < horizon:
            raise ConfigError(f"{p} offset {offsets[p]} shorter than horizon {horizon}")
    s0, s1 = split_range
    t_total = x.data.shape[0]
    if not 0 <= s0 < s1 <= t_total:
        raise DataError(f"split range {split_range} outside [0, {t_total}]")
    deepest = max(offsets[p] for p in periods)
    first = max(s0 - 1, deepest - 1)
    last = s1 - 1 - horizon
    if last < first:
        raise DataError(
            f"split {split_range} yields no samples: lookback {deepest} and "
            f"horizon {horizon} leave no admissible anchor")
    anchors = np.arange(first, last + 1)
    enc_parts = []
    for p in periods:
        start = anchors[:, None] - offsets[p] + 1 + np.arange(horizon)[None, :]
        enc_parts.append(x.data[start])          # (S, L, N, C)
    encoder = np.concatenate(enc_parts, axis=1)
    dec_idx = anchors[:, None] + np.arange(horizon)[None, :]
    decoder = x.data[dec_idx]
    target = x.data[dec_idx + 1][:, :, :, :1]
    return SampleSet(encoder_input=encoder, decoder_input=decoder, target=target,
                     anchors=anchors, periods=periods)


def sample_count(split_range: tuple[int, int], deepest_offset: int, horizon: int) -> int:
    """Closed form for len(assemble_samples(...)) with the same arguments."""
    s0, s1 = split_range
    first = max(s0 - 1, deepest_offset - 1)
    last = s1 - 1 - horizon
    return max(0, last - first + 1)


def iterate_batches(samples: SampleSet, batch_size: int, rng=None):
    """Yield (encoder, decoder, target) batches; shuffled when rng is given."""
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    order = np.arange(len(samples))
    if rng is not None:
        rng.shuffle(order)
    for start in range(0, len(order), batch_size):
        sel = order[start:start + batch_size]
        yield (samples.encoder_input[sel], samples.decoder_input[sel],
               samples.target[sel])


# ---------------------------------------------------------------------------
# synthetic traffic

# daily harmonics skip multiples of 24 (those repeat every hour); weekly
# harmonics skip multiples of 7 (those repeat every day). High harmonics are
# included so correlation shows up inside short rank windows.
_DAILY_HARMONICS = (1, 2, 3, 5, 7, 11, 13, 23, 29, 41, 47)
_WEEKLY_HARMONICS = (1, 3, 5, 9, 27, 81, 165, 243, 339, 453)


def generate_synthetic(n_sensors: int, weeks: int, daily_amplitude: float = 1.0,
                       weekly_amplitude: float = 0.0, noise_sigma: float = 0.1,
                       seed: int = 0, interval_minutes: int = 5,
                       n_attributes: int = 1, base: float = 10.0) -> TrafficDataset:
    """Ring-graph dataset whose dominant periodicity is controlled by the two
    amplitudes. Deterministic for a given seed."""
    if n_sensors < 1:
        raise ConfigError(f"n_sensors must be >= 1, got {n_sensors}")
    if weeks < 2:
        raise ConfigError(f"need >= 2 weeks for a weekly lookback, got {weeks}")
    if 60 % interval_minutes != 0:
        raise ConfigError(f"interval_minutes must divide 60, got {interval_minutes}")
    per_day = 24 * 60 // interval_minutes
    per_week = 7 * per_day
    t_total = weeks * per_week
    rng = np.random.default_rng(seed)
    tt = np.arange(t_total, dtype=np.float64)
    data = np.empty((t_total, n_sensors, n_attributes))
    daily_ks = [k for k in _DAILY_HARMONICS if k <= per_day // 3]
    weekly_ks = [k for k in _WEEKLY_HARMONICS if k <= per_week // 3]
    for s in range(n_sensors):
        for a in range(n_attributes):
            wave = np.full(t_total, base)
            if daily_amplitude != 0.0:
                scale = daily_amplitude / np.sqrt(len(daily_ks))
                for k in daily_ks:
                    phase = rng.uniform(0.0, 2.0 * np.pi)
                    wave = wave + scale * np.sin(2.0 * np.pi * k * tt / per_day + phase)
            if weekly_amplitude != 0.0:
                scale = weekly_amplitude / np.sqrt(len(weekly_ks))
                for k in weekly_ks:
                    phase = rng.uniform(0.0, 2.0 * np.pi)
                    wave = wave + scale * np.sin(2.0 * np.pi * k * tt / per_week + phase)
            if noise_sigma > 0.0:
                wave = wave + rng.normal(0.0, noise_sigma, t_total)
            data[:, s, a] = wave
    adjacency = np.zeros((n_sensors, n_sensors))
    if n_sensors > 1:
        for i in range(n_sensors):
            j = (i + 1) % n_sensors
            adjacency[i, j] = adjacency[j, i] = 1.0
    tensor = SpatioTemporalTensor(data, interval_minutes=interval_minutes)
    return TrafficDataset(tensor=tensor, adjacency=adjacency,
                          name=f"synthetic-{n_sensors}x{weeks}w-seed{seed}")
