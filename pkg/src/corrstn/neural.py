"""Graph and attention layers driven by the correlation tensors.

The graph layer mixes each time slice across sensors through three routes:
per-attribute correlation matrices modulated by input-dependent spatial
weights, and the normalized structural adjacency. The attention layer runs
per-sensor multi-head attention over time with keys reconstructed from each
sensor's top-U correlated peers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Module, Parameter, Tensor
from .errors import ConfigError, DataError, DimensionError
from .scorr import SCorrTensor, TopUSCorr, topu_mixing_matrix


@dataclass(frozen=True)
class NormalizedAdjacency:
    matrix: np.ndarray


def add_self_loops(adj: np.ndarray) -> np.ndarray:
    return np.asarray(adj, dtype=np.float64) + np.eye(adj.shape[0])


def laplacian_normalize(adj: np.ndarray) -> NormalizedAdjacency:
    """Symmetric degree normalization out[i][j] = adj[i][j] / sqrt(r_i * r_j)
    with r the row sums. Callers add self-loops first so no row sum is zero."""
    adj = np.asarray(adj, dtype=np.float64)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise DimensionError(f"adjacency must be square, got {adj.shape}")
    if adj.min() < 0:
        raise DataError("adjacency entries must be nonnegative")
    rowsum = adj.sum(axis=1)
    if np.any(rowsum <= 0):
        raise DataError("zero row sum; add self-loops before normalizing")
    scale = 1.0 / np.sqrt(rowsum)
    return NormalizedAdjacency(adj * scale[:, None] * scale[None, :])


def causal_mask(length: int) -> np.ndarray:
    """True above the diagonal: position t may not attend to positions > t."""
    return np.triu(np.ones((length, length), dtype=bool), k=1)


def spatial_dynamic_weights(z: Tensor) -> Tensor:
    """Row-stochastic (..., N, N) weights: softmax of Z Z^T / sqrt(d_model)."""
    if z.ndim < 2:
        raise DimensionError(f"need (..., N, d), got {z.shape}")
    d_model = z.shape[-1]
    scores = ad.matmul(z, ad.permute(z, (*range(z.ndim - 2), z.ndim - 1, z.ndim - 2)))
    return ad.softmax(scores * (1.0 / np.sqrt(d_model)), axis=-1)


def cignn_forward(z: Tensor, scorr: SCorrTensor, adj: NormalizedAdjacency,
                  w: Tensor, psi: Tensor, omega: Tensor) -> Tensor:
    """Sum over attributes of psi_c * relu(SCorr_c @ S_w @ Z @ W), plus the
    structural route omega * relu(A @ Z @ W). Shapes: z (..., N, d_model),
    w (d, d), psi (C,), omega (1,)."""
    n = z.shape[-2]
    c = scorr.n_attributes
    if scorr.n_sensors != n or adj.matrix.shape != (n, n):
        raise DimensionError(
            f"{n} sensors vs scorr {scorr.n_sensors}, adj {adj.matrix.shape}")
    if psi.shape != (c,):
        raise DimensionError(f"psi must have shape ({c},), got {psi.shape}")
    zw = ad.matmul(z, w)
    base = ad.matmul(spatial_dynamic_weights(z), zw)
    out = None
    for attr in range(c):
        route = ad.relu(ad.matmul(Tensor(scorr.degrees[:, :, attr]), base))
        scaled = ad.mul(route, ad.narrow(psi, 0, attr, 1))
        out = scaled if out is None else ad.add(out, scaled)
    structural = ad.mul(ad.relu(ad.matmul(Tensor(adj.matrix), zw)), omega)
    return ad.add(out, structural)


def reconstruct_keys(topu: TopUSCorr, k: Tensor) -> Tensor:
    """Replace each sensor's keys with the weighted blend of its top-U peers:
    out_i = (1/C) sum_c sum_u weights[i,u,c] * k[indices[i,u,c]].
    k has shape (..., N, L, d); output shape is identical."""
    n = topu.indices.shape[0]
    if k.ndim < 3 or k.shape[-3] != n:
        raise DimensionError(f"keys must be (..., {n}, L, d), got {k.shape}")
    if int(topu.indices.min()) < 0 or int(topu.indices.max()) >= n:
        raise DimensionError("top-U indices out of range")
    mixing = Tensor(topu_mixing_matrix(topu))
    swap = (*range(k.ndim - 3), k.ndim - 2, k.ndim - 3, k.ndim - 1)
    mixed = ad.matmul(mixing, ad.permute(k, swap))
    return ad.permute(mixed, swap)


def split_heads(x: Tensor, heads: int) -> Tensor:
    """(..., L, d) -> (..., H, L, d/H)."""
    d = x.shape[-1]
    if d % heads != 0:
        raise ConfigError(f"d_model {d} not divisible by {heads} heads")
    parts = x.shape[:-1] + (heads, d // heads)
    split = ad.reshape(x, parts)
    swap = (*range(split.ndim - 3), split.ndim - 2, split.ndim - 3, split.ndim - 1)
    return ad.permute(split, swap)


def merge_heads(x: Tensor) -> Tensor:
    """(..., H, L, d/H) -> (..., L, d)."""
    swap = (*range(x.ndim - 3), x.ndim - 2, x.ndim - 3, x.ndim - 1)
    merged = ad.permute(x, swap)
    return ad.reshape(merged, merged.shape[:-2] + (merged.shape[-2] * merged.shape[-1],))


def ciatt_forward(q: Tensor, k: Tensor, v: Tensor, topu: TopUSCorr, heads: int,
                  w_out: Tensor, b_out: Tensor | None = None,
                  mask: np.ndarray | None = None) -> Tensor:
    """Correlation attention on projected q/k/v of shape (..., N, L, d_model).

    Keys are blended across correlated sensors, then each head attends over
    time with softmax(Q K~^T / sqrt(d_head)); head outputs are concatenated
    and linearly projected. mask (L_q, L_k) blocks True positions.
    """
    if q.shape[-1] != k.shape[-1] or k.shape != v.shape:
        raise DimensionError(
            f"projection shapes disagree: q {q.shape}, k {k.shape}, v {v.shape}")
    d_model = q.shape[-1]
    k = reconstruct_keys(topu, k)
    qh, kh, vh = (split_heads(t, heads) for t in (q, k, v))
    swap = (*range(kh.ndim - 2), kh.ndim - 1, kh.ndim - 2)
    scores = ad.matmul(qh, ad.permute(kh, swap)) * (1.0 / np.sqrt(d_model // heads))
    weights = ad.softmax(scores, mask=mask, axis=-1)
    return ad.linear(merge_heads(ad.matmul(weights, vh)), w_out, b_out)


def conv1d_temporal(x: Tensor, kernel: Tensor, bias: Tensor | None = None) -> Tensor:
    """Same-length convolution along axis -2 of x (..., T, d).

    A (k,) kernel scales shifted copies uniformly across features; a
    (k, d_in, d_out) kernel applies one projection per temporal offset.
    """
    if x.ndim < 2:
        raise DimensionError(f"need (..., T, d), got {x.shape}")
    if kernel.ndim not in (1, 3):
        raise DimensionError(f"kernel must be (k,) or (k, d_in, d_out), got {kernel.shape}")
    k = kernel.shape[0]
    if kernel.ndim == 3 and kernel.shape[1] != x.shape[-1]:
        raise DimensionError(
            f"kernel d_in {kernel.shape[1]} != feature width {x.shape[-1]}")
    t_len = x.shape[-2]
    padded = ad.pad_axis(x, x.ndim - 2, (k - 1) // 2, k - 1 - (k - 1) // 2)
    out = None
    for offset in range(k):
        shifted = ad.narrow(padded, x.ndim - 2, offset, t_len)
        tap = ad.narrow(kernel, 0, offset, 1)
        if kernel.ndim == 1:
            term = ad.mul(shifted, tap)
        else:
            term = ad.matmul(shifted, ad.reshape(tap, kernel.shape[1:]))
        out = term if out is None else ad.add(out, term)
    return out if bias is None else ad.add(out, bias)


# ---------------------------------------------------------------------------
# module classes

class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator,
                 bias: bool = True):
        self.weight = Parameter(ad.xavier_uniform(rng, (d_in, d_out), d_in, d_out))
        self.bias = Parameter(np.zeros(d_out)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return ad.linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, d: int, eps: float = 1e-5):
        self.gain = Parameter(np.ones(d))
        self.bias = Parameter(np.zeros(d))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return ad.layer_norm(x, self.gain, self.bias, eps=self.eps)


class TemporalConv(Module):
    """Local-context projection along the time axis, same output length."""

    def __init__(self, kernel_size: int, d_model: int, rng: np.random.Generator):
        if kernel_size < 1 or kernel_size % 2 == 0:
            raise ConfigError(f"kernel_size must be odd positive, got {kernel_size}")
        self.kernel = Parameter(ad.xavier_uniform(
            rng, (kernel_size, d_model, d_model), kernel_size * d_model, d_model))
        self.bias = Parameter(np.zeros(d_model))

    def __call__(self, x: Tensor) -> Tensor:
        return conv1d_temporal(x, self.kernel, self.bias)


class CIATT(Module):
    """Correlation attention block: projections, optional temporal conv on
    Q/K, key reconstruction, multi-head attention, output projection."""

    def __init__(self, d_model: int, heads: int, topu: TopUSCorr,
                 rng: np.random.Generator, conv_kernel: int | None = None,
                 dropout: float = 0.0):
        if d_model % heads != 0:
            raise ConfigError(f"d_model {d_model} not divisible by heads {heads}")
        self.wq = Linear(d_model, d_model, rng)
        self.wk = Linear(d_model, d_model, rng)
        self.wv = Linear(d_model, d_model, rng)
        self.w_out = Linear(d_model, d_model, rng)
        self.q_conv = TemporalConv(conv_kernel, d_model, rng) if conv_kernel else None
        self.k_conv = TemporalConv(conv_kernel, d_model, rng) if conv_kernel else None
        self.heads = heads
        self.topu = topu
        self.dropout = dropout
        self.training = False

    def __call__(self, x_q: Tensor, x_kv: Tensor, mask: np.ndarray | None = None,
                 rng: np.random.Generator | None = None) -> Tensor:
        q = self.wq(x_q)
        k = self.wk(x_kv)
        v = self.wv(x_kv)
        if self.q_conv is not None:
            q = self.q_conv(q)
            k = self.k_conv(k)
        out = ciatt_forward(q, k, v, self.topu, self.heads,
                            self.w_out.weight, self.w_out.bias, mask=mask)
        if self.training and self.dropout > 0.0:
            out = ad.dropout(out, self.dropout, rng)
        return out


class CIGNN(Module):
    """Correlation graph block over the sensor axis of (..., N, d_model)."""

    def __init__(self, d_model: int, scorr: SCorrTensor, adj: NormalizedAdjacency,
                 rng: np.random.Generator):
        c = scorr.n_attributes
        self.w = Parameter(ad.xavier_uniform(rng, (d_model, d_model), d_model, d_model))
        self.psi = Parameter(np.full(c, 1.0 / c))
        self.omega = Parameter(np.ones(1))
        self.scorr = scorr
        self.adj = adj

    def __call__(self, z: Tensor) -> Tensor:
        return cignn_forward(z, self.scorr, self.adj, self.w, self.psi, self.omega)
