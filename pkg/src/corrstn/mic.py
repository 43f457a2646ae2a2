"""Maximal information coefficient (MIC) between equal-length scalar sequences.

The coefficient is the maximum, over admissible grid shapes (a, b) with
a*b < m**eta, of the grid mutual information normalized by log2(min(a, b)).
For every shape the cell boundaries are placed at equal-count rank quantiles
of each axis independently, which makes the statistic deterministic and
invariant under strictly monotone transformations of either sequence.
"""

from __future__ import annotations

import multiprocessing
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, DimensionError, PartitionError

DEFAULT_ETA = 0.6


@dataclass(frozen=True)
class GridSpec:
    """Explicit grid shape for `mutual_information`.

    a_bins / b_bins partition the x / y axis; cell_bound is the admissibility
    bound on the cell count (m**eta in the grid search).
    """

    a_bins: int
    b_bins: int
    cell_bound: float

    def __post_init__(self):
        if self.a_bins < 2 or self.b_bins < 2:
            raise ConfigError("grid needs at least 2 bins per axis, got "
                              f"{self.a_bins}x{self.b_bins}")
        if self.cell_bound <= 0:
            raise ConfigError(f"cell_bound must be positive, got {self.cell_bound}")
        if self.a_bins * self.b_bins >= self.cell_bound:
            raise ConfigError(
                f"grid {self.a_bins}x{self.b_bins} has {self.a_bins * self.b_bins} "
                f"cells, not below the bound {self.cell_bound}")


@dataclass(frozen=True)
class MicResult:
    """MIC value plus diagnostics from the grid search."""

    value: float
    degenerate: bool
    grid_shape: tuple[int, int] | None


def _as_sequence(values, name="sequence") -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    if arr.size < 2:
        raise DimensionError(f"{name} needs at least 2 values, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite values")
    return arr


def _mi_bits(counts: np.ndarray) -> float:
    """Mutual information in bits of a joint contingency table."""
    counts = np.asarray(counts)
    n = counts.sum()
    if n == 0:
        raise PartitionError("empty contingency table")
    rows = counts.sum(axis=1)
    cols = counts.sum(axis=0)
    outer = rows[:, None] * cols[None, :]
    mask = counts > 0
    c = counts[mask].astype(np.float64)
    o = outer[mask].astype(np.float64)
    terms = c * np.log2(c * (float(n) / o))
    return float(terms.sum() / n)


def mutual_information(x, y, grid: GridSpec, x_edges, y_edges) -> float:
    """Grid mutual information (bits) with explicit value-space boundaries.

    Edges must be strictly increasing, match the grid's bin counts, and cover
    the data range of their axis. Empty cells contribute zero.
    """
    x = _as_sequence(x, "x")
    y = _as_sequence(y, "y")
    if x.size != y.size:
        raise DimensionError(f"length mismatch: {x.size} vs {y.size}")
    x_edges = np.asarray(x_edges, dtype=np.float64)
    y_edges = np.asarray(y_edges, dtype=np.float64)
    for name, edges, bins, data in (("x", x_edges, grid.a_bins, x),
                                    ("y", y_edges, grid.b_bins, y)):
        if edges.ndim != 1 or edges.size != bins + 1:
            raise PartitionError(
                f"{name}_edges must have {bins + 1} entries, got {edges.size}")
        if not np.all(np.diff(edges) > 0):
            raise PartitionError(f"{name}_edges must be strictly increasing")
        if data.min() < edges[0] or data.max() > edges[-1]:
            raise PartitionError(f"{name}_edges do not cover the data range")
    counts, _, _ = np.histogram2d(x, y, bins=[x_edges, y_edges])
    return _mi_bits(counts.astype(np.int64))


def admissible_shapes(m: int, eta: float) -> list[tuple[int, int]]:
    """All grid shapes (a, b) with a, b >= 2 and a*b strictly below m**eta.

    Falls back to the minimal 2x2 grid when the bound admits no shape at all
    (very short sequences), so MIC stays defined for every m >= 2.
    """
    if not 0.0 < eta <= 1.0:
        raise ConfigError(f"eta must be in (0, 1], got {eta}")
    bound = float(m) ** eta
    shapes = []
    a = 2
    while a * 2 < bound:
        b = 2
        while a * b < bound:
            shapes.append((a, b))
            b += 1
        a += 1
    if not shapes:
        shapes = [(2, 2)]
    return shapes


def _stable_order(values: np.ndarray) -> np.ndarray:
    # stable sort fixes tie handling: equal values keep input order
    return np.argsort(values, kind="stable")


def _ranks_from_order(order: np.ndarray) -> np.ndarray:
    ranks = np.empty(order.size, dtype=np.int64)
    ranks[order] = np.arange(order.size, dtype=np.int64)
    return ranks


def _block_counts(m: int, n: int) -> np.ndarray:
    """Sizes of the n equal-count rank blocks of m points."""
    idx = (np.arange(m, dtype=np.int64) * n) // m
    return np.bincount(idx, minlength=n)


class _GridSearch:
    """Precomputed tables for the equal-count grid search at fixed (m, eta).

    Reused across many pairs of the same length; all tables depend only on
    m and eta, never on the data.
    """

    def __init__(self, m: int, eta: float):
        self.m = m
        self.eta = eta
        self.shapes = admissible_shapes(m, eta)
        base = np.arange(m, dtype=np.int64)
        a_bins = {}
        for a, _ in self.shapes:
            if a not in a_bins:
                a_bins[a] = (base * a) // m
        marg = {}
        for n in {a for a, _ in self.shapes} | {b for _, b in self.shapes}:
            marg[n] = _block_counts(m, n)
        # group by b so the y-axis binning is computed once per distinct b
        self.by_b: dict[int, list[tuple[int, np.ndarray, np.ndarray, float]]] = {}
        for a, b in self.shapes:
            outer = (marg[a][:, None] * marg[b][None, :]).astype(np.float64).ravel()
            row_term = a_bins[a] * b
            self.by_b.setdefault(b, []).append((a, row_term, outer, np.log2(min(a, b))))

    def best(self, sigma: np.ndarray) -> tuple[float, tuple[int, int]]:
        """Max normalized MI over all shapes.

        sigma is the y-rank sequence reordered by ascending x-rank, so the
        x-axis binning is the identity block pattern for every pair.
        """
        m = self.m
        best_val = -1.0
        best_shape = self.shapes[0]
        for b, entries in self.by_b.items():
            col_idx = (sigma * b) // m
            for a, row_term, outer, normalizer in entries:
                counts = np.bincount(row_term + col_idx, minlength=a * b)
                mask = counts > 0
                c = counts[mask].astype(np.float64)
                o = outer[mask]
                mi = float((c * np.log2(c * (m / o))).sum() / m)
                val = mi / normalizer
                if val > best_val:
                    best_val = val
                    best_shape = (a, b)
        return min(max(best_val, 0.0), 1.0), best_shape


def _rank_profile(values: np.ndarray) -> tuple[bytes, np.ndarray, np.ndarray]:
    """(key, order, ranks) of a sequence; the key depends only on ranks.

    Canonicalizing the argument order on this key makes mic(x, y), mic(y, x)
    and mic(x, g(y)) for increasing g all run through bit-identical float
    summations.
    """
    order = _stable_order(values)
    ranks = _ranks_from_order(order)
    return ranks.tobytes(), order, ranks


def mic_full(x, y, eta: float = DEFAULT_ETA, _search: _GridSearch | None = None) -> MicResult:
    """MIC with diagnostics. Zero-variance input yields value 0, flagged."""
    x = _as_sequence(x, "x")
    y = _as_sequence(y, "y")
    if x.size != y.size:
        raise DimensionError(f"length mismatch: {x.size} vs {y.size}")
    if np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
        return MicResult(0.0, True, None)
    search = _search if _search is not None else _GridSearch(x.size, eta)
    px, py = _rank_profile(x), _rank_profile(y)
    if px[0] > py[0]:
        px, py = py, px
    sigma = py[2][px[1]]
    value, shape = search.best(sigma)
    return MicResult(value, False, shape)


def mic(x, y, eta: float = DEFAULT_ETA) -> float:
    """Maximal information coefficient of two equal-length sequences, in [0, 1]."""
    return mic_full(x, y, eta).value


# ---------------------------------------------------------------------------
# batched pairwise kernel

_WORKER_STATE: dict = {}


def _pair_value(columns, i: int, j: int, search: _GridSearch, cache: dict) -> float:
    for idx in (i, j):
        if idx not in cache:
            col = columns[:, idx]
            cache[idx] = None if np.ptp(col) == 0.0 else _rank_profile(col)
    ci, cj = cache[i], cache[j]
    if ci is None or cj is None:
        return 0.0
    # same canonical ordering as mic()
    if ci[0] > cj[0]:
        ci, cj = cj, ci
    sigma = cj[2][ci[1]]
    return search.best(sigma)[0]


def _worker_init(columns, eta):
    _WORKER_STATE["columns"] = columns
    _WORKER_STATE["search"] = _GridSearch(columns.shape[0], eta)
    _WORKER_STATE["cache"] = {}


def _worker_chunk(pairs):
    columns = _WORKER_STATE["columns"]
    search = _WORKER_STATE["search"]
    cache = _WORKER_STATE["cache"]
    return [_pair_value(columns, i, j, search, cache) for i, j in pairs]


def pairwise_mic(columns, eta: float = DEFAULT_ETA, workers: int = 1) -> np.ndarray:
    """Symmetric matrix of MIC values between all column pairs.

    `columns` is an (m, k) array or a list of k equal-length sequences.
    The diagonal is 1 by convention; pairs involving a zero-variance column
    are 0. Results are bit-identical for any worker count because each cell
    is a pure function of its two columns.
    """
    if isinstance(columns, np.ndarray) and columns.ndim == 2:
        mat = np.asarray(columns, dtype=np.float64)
    else:
        cols = [_as_sequence(c, f"column {idx}") for idx, c in enumerate(columns)]
        lengths = {c.size for c in cols}
        if len(lengths) > 1:
            raise DimensionError(f"columns have mixed lengths: {sorted(lengths)}")
        mat = np.stack(cols, axis=1)
    m, k = mat.shape
    if m < 2:
        raise DimensionError(f"columns need at least 2 values, got {m}")
    if not np.all(np.isfinite(mat)):
        raise DataError("columns contain non-finite values")

    result = np.eye(k, dtype=np.float64)
    pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]
    if not pairs:
        return result

    if workers <= 1 or len(pairs) < 2:
        search = _GridSearch(m, eta)
        cache: dict = {}
        values = [_pair_value(mat, i, j, search, cache) for i, j in pairs]
    else:
        n_chunks = min(len(pairs), workers * 8)
        chunks = [list(c) for c in np.array_split(np.array(pairs), n_chunks)]
        with multiprocessing.Pool(workers, initializer=_worker_init,
                                  initargs=(mat, eta)) as pool:
            chunked = pool.map(_worker_chunk, [[(int(i), int(j)) for i, j in c]
                                               for c in chunks])
        values = [v for chunk in chunked for v in chunk]

    for (i, j), v in zip(pairs, values):
        result[i, j] = v
        result[j, i] = v
    return result
