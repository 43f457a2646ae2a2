"""Spatial correlation tensor: per-attribute MIC degrees between all sensor pairs.

Static form (full series), windowed form (one tensor per sliding window), and
the softmax-normalized top-U form consumed by the correlation attention layer.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .data import SpatioTemporalTensor
from .errors import ConfigError, DataError, DimensionError
from .mic import DEFAULT_ETA, pairwise_mic

_SCOR_MAGIC = b"SCOR"
_SCOR_VERSION = 1


@dataclass(frozen=True)
class SCorrTensor:
    """N x N x C correlation degrees in [0, 1], symmetric per attribute."""

    degrees: np.ndarray

    def __post_init__(self):
        d = self.degrees
        if d.ndim != 3 or d.shape[0] != d.shape[1]:
            raise DimensionError(f"degrees must be N x N x C, got {d.shape}")
        if d.min() < 0.0 or d.max() > 1.0:
            raise DataError("correlation degrees outside [0, 1]")

    @property
    def n_sensors(self) -> int:
        return self.degrees.shape[0]

    @property
    def n_attributes(self) -> int:
        return self.degrees.shape[2]


@dataclass(frozen=True)
class TopUSCorr:
    """Per (sensor, attribute): the U most correlated sensors and their softmax weights."""

    indices: np.ndarray   # (N, U, C) int
    weights: np.ndarray   # (N, U, C) float, rows sum to 1

    @property
    def top_u(self) -> int:
        return self.indices.shape[1]


def compute_scorr(x: SpatioTemporalTensor, eta: float = DEFAULT_ETA,
                  workers: int = 1) -> SCorrTensor:
    """MIC between the full T-length series of every sensor pair, per attribute.

    Diagonal is 1 by convention; pairs involving a flatlined (zero-variance)
    sensor are 0. Output is bit-identical for any worker count.
    """
    t, n, c = x.data.shape
    if t < 2:
        raise DimensionError(f"need at least 2 timestamps, got {t}")
    degrees = np.empty((n, n, c), dtype=np.float64)
    for attr in range(c):
        degrees[:, :, attr] = pairwise_mic(x.data[:, :, attr], eta=eta, workers=workers)
    return SCorrTensor(degrees)


def windowed_scorr(x: SpatioTemporalTensor, window: int, stride: int = 1,
                   eta: float = DEFAULT_ETA, workers: int = 1) -> list[SCorrTensor]:
    """One correlation tensor per sliding window position over the time axis."""
    t = x.data.shape[0]
    if window < 2 or window > t:
        raise DimensionError(f"window must be in [2, {t}], got {window}")
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    out = []
    for start in range(0, t - window + 1, stride):
        piece = SpatioTemporalTensor(x.data[start:start + window],
                                     interval_minutes=x.interval_minutes)
        out.append(compute_scorr(piece, eta=eta, workers=workers))
    return out


def top_u_normalize(s: SCorrTensor, u: int) -> TopUSCorr:
    """Select the u largest degrees per (sensor, attribute) and softmax them.

    Ties are broken toward the lower sensor index so repeated runs agree.
    """
    n = s.n_sensors
    if not 1 <= u <= n:
        raise ConfigError(f"top-u must be in [1, {n}], got {u}")
    # stable argsort on negated degrees: equal degrees keep ascending index
    order = np.argsort(-s.degrees, axis=1, kind="stable")
    indices = order[:, :u, :]
    selected = np.take_along_axis(s.degrees, indices, axis=1)
    exps = np.exp(selected)
    weights = exps / exps.sum(axis=1, keepdims=True)
    return TopUSCorr(indices=indices, weights=weights)


def topu_mixing_matrix(topu: TopUSCorr) -> np.ndarray:
    """Dense N x N row-mixing matrix equivalent to the top-U key reconstruction.

    Row i holds the attribute-averaged softmax weights of sensor i's selected
    neighbours, so mixed[i] = sum_j R[i, j] * original[j].
    """
    n, u, c = topu.indices.shape
    mixing = np.zeros((n, n), dtype=np.float64)
    rows = np.repeat(np.arange(n), u * c)
    np.add.at(mixing, (rows, topu.indices.reshape(-1)), topu.weights.reshape(-1) / c)
    return mixing


def identity_topu(n: int, c: int = 1) -> TopUSCorr:
    """U=1 self-selection with unit weights; mixing with it is a no-op."""
    indices = np.tile(np.arange(n)[:, None, None], (1, 1, c))
    weights = np.ones((n, 1, c), dtype=np.float64)
    return TopUSCorr(indices=indices, weights=weights)


# ---------------------------------------------------------------------------
# storage

def save_scorr(s: SCorrTensor, path) -> None:
    """Binary layout: 'SCOR', version u32, N u32, C u32, flags u32, then
    attribute-major little-endian float64 degrees."""
    n, c = s.n_sensors, s.n_attributes
    payload = np.ascontiguousarray(np.transpose(s.degrees, (2, 0, 1)), dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIIII", _SCOR_MAGIC, _SCOR_VERSION, n, c, 0))
        fh.write(payload.tobytes())


def load_scorr(path) -> SCorrTensor:
    with open(path, "rb") as fh:
        header = fh.read(20)
        if len(header) != 20:
            raise DataError(f"{path}: truncated header")
        magic, version, n, c, _flags = struct.unpack("<4sIIII", header)
        if magic != _SCOR_MAGIC:
            raise DataError(f"{path}: not a SCOR file (magic {magic!r})")
        if version != _SCOR_VERSION:
            raise DataError(f"{path}: unsupported SCOR version {version}")
        raw = np.frombuffer(fh.read(), dtype="<f8")
    if raw.size != n * n * c:
        raise DataError(f"{path}: expected {n * n * c} values, got {raw.size}")
    return SCorrTensor(np.transpose(raw.reshape(c, n, n), (1, 2, 0)).copy())


def export_scorr_csv(s: SCorrTensor, path) -> None:
    with open(path, "w") as fh:
        fh.write("sensor_i,sensor_j,attribute,degree\n")
        for i in range(s.n_sensors):
            for j in range(s.n_sensors):
                for c in range(s.n_attributes):
                    fh.write(f"{i},{j},{c},{float(s.degrees[i, j, c])!r}\n")
