"""Temporal correlation of periodic history with the prediction window.

For each sensor and attribute, the hourly/daily/weekly block preceding an
anchor timestamp is compared (via MIC) against the block immediately after
it; averaging over anchors and weighting by period type gives the statistics
that drive the periodic-data selection verdict.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import SpatioTemporalTensor
from .errors import (ConfigError, DimensionError, EmptyAnchorError,
                     OutOfRangeError)
from .mic import DEFAULT_ETA, _GridSearch, mic_full

PERIODS = ("hourly", "daily", "weekly")


@dataclass(frozen=True)
class PeriodSpec:
    """Window length tau plus the lookback offsets of the three period types."""

    tau: int = 12
    hourly_offset: int = 12
    daily_offset: int = 288
    weekly_offset: int = 2016

    def __post_init__(self):
        if self.tau < 1:
            raise ConfigError(f"tau must be >= 1, got {self.tau}")
        if not self.hourly_offset <= self.daily_offset <= self.weekly_offset:
            raise ConfigError(
                "offsets must be ordered hourly <= daily <= weekly, got "
                f"{self.hourly_offset}/{self.daily_offset}/{self.weekly_offset}")
        if min(self.hourly_offset, self.tau) < 1:
            raise ConfigError("offsets and tau must be positive")

    @classmethod
    def from_interval(cls, interval_minutes: int, tau: int = 12) -> "PeriodSpec":
        if 60 % interval_minutes != 0:
            raise ConfigError(
                f"interval_minutes must divide 60, got {interval_minutes}")
        hourly = 60 // interval_minutes
        return cls(tau=tau, hourly_offset=hourly, daily_offset=24 * hourly,
                   weekly_offset=7 * 24 * hourly)

    def offset_for(self, period: str) -> int:
        if period not in PERIODS:
            raise ConfigError(f"unknown period {period!r}")
        return getattr(self, f"{period}_offset")


@dataclass(frozen=True)
class TCorrWeights:
    """Period-type weights; defaults follow the forecasting-uncertainty rule
    of discounting older history."""

    hourly: float = 0.95
    daily: float = 0.95
    weekly: float = 0.85

    def __post_init__(self):
        for p in PERIODS:
            w = getattr(self, p)
            if not 0.0 < w <= 1.0:
                raise ConfigError(f"{p} weight must be in (0, 1], got {w}")

    def for_period(self, period: str) -> float:
        if period not in PERIODS:
            raise ConfigError(f"unknown period {period!r}")
        return getattr(self, period)


def extract_periodic_windows(x: SpatioTemporalTensor, t: int, spec: PeriodSpec,
                             periods=PERIODS) -> dict[str, np.ndarray]:
    """Views of the tau-length period blocks behind anchor t plus the target.

    The window for a period with offset P covers [t-P+1, t-P+tau]; the target
    covers [t+1, t+tau]. Slices are views into x.data, not copies.
    """
    t_total = x.data.shape[0]
    tau = spec.tau
    out = {}
    for p in periods:
        start = t - spec.offset_for(p) + 1
        if start < 0:
            raise OutOfRangeError(
                f"{p} window needs t >= {spec.offset_for(p) - 1}, got t={t}")
        if start + tau > t_total:
            raise OutOfRangeError(
                f"{p} window [{start}, {start + tau}) exceeds {t_total} timestamps")
        out[p] = x.data[start:start + tau]
    if t + 1 + tau > t_total:
        raise OutOfRangeError(
            f"target window needs t <= {t_total - tau - 1}, got t={t}")
    out["target"] = x.data[t + 1:t + 1 + tau]
    return out


def anchor_positions(n_timestamps: int, spec: PeriodSpec) -> np.ndarray:
    """Anchors with full weekly history and a full target window, stepping by
    tau so successive targets do not overlap."""
    return np.arange(spec.weekly_offset - 1, n_timestamps - spec.tau + 1, spec.tau)


def compute_tcorr(period_window_source: SpatioTemporalTensor,
                  x: SpatioTemporalTensor, spec: PeriodSpec, period: str,
                  eta: float = DEFAULT_ETA, anchors=None) -> np.ndarray:
    """Unweighted temporal correlation degrees, shape (N, C).

    For each anchor t the period block is sliced from period_window_source
    and the target block from x; entry (i, c) is the anchor-average of
    mic(block[:, i, c], target[:, i, c]). Anchors default to
    anchor_positions over the length of x. Accumulation follows anchor order,
    so results are bit-reproducible.
    """
    if period not in PERIODS:
        raise ConfigError(f"unknown period {period!r}")
    if period_window_source.data.shape != x.data.shape:
        raise DimensionError(
            f"window source shape {period_window_source.data.shape} != "
            f"target source shape {x.data.shape}")
    t_total, n, c = x.data.shape
    if anchors is None:
        anchors = anchor_positions(t_total, spec)
    anchors = np.asarray(anchors, dtype=np.int64)
    if anchors.size == 0:
        raise EmptyAnchorError(
            f"no admissible anchors: need >= {spec.weekly_offset + spec.tau} "
            f"timestamps, got {t_total}")
    tau = spec.tau
    offset = spec.offset_for(period)
    search = _GridSearch(tau, eta)
    acc = np.zeros((n, c), dtype=np.float64)
    for t in anchors:
        start = int(t) - offset + 1
        if start < 0 or t + 1 + tau > t_total:
            raise OutOfRangeError(f"anchor {t} leaves no room for {period} window")
        window = period_window_source.data[start:start + tau]
        target = x.data[t + 1:t + 1 + tau]
        for i in range(n):
            for a in range(c):
                acc[i, a] += mic_full(window[:, i, a], target[:, i, a],
                                      eta=eta, _search=search).value
    return acc / anchors.size


def weighted_tcorr(raw: np.ndarray, period: str,
                   weights: TCorrWeights | None = None) -> np.ndarray:
    """Scale raw degrees by the period-type weight."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.min() < 0.0 or raw.max() > 1.0:
        raise ConfigError("raw temporal correlation degrees must be in [0, 1]")
    return raw * (weights or TCorrWeights()).for_period(period)


def select_periods(delta_hd: float, delta_hw: float, delta_dw: float) -> tuple[str, ...]:
    """Decision rule mapping the contribution gaps to a period subset.

    Hourly is always the basis. Daily/weekly join when they beat hourly; when
    both beat hourly, the daily-vs-weekly gap decides whether weekly stays
    (ties keep daily alone: the cheaper window).
    """
    for name, d in (("hd", delta_hd), ("hw", delta_hw), ("dw", delta_dw)):
        if not np.isfinite(d):
            raise ConfigError(f"delta_{name} must be finite, got {d}")
    if delta_hd > 0 and delta_hw > 0:
        if delta_dw > 0:
            return ("hourly", "daily", "weekly")
        return ("hourly", "daily")
    if delta_hd > 0:
        return ("hourly", "daily")
    if delta_hw > 0:
        return ("hourly", "weekly")
    return ("hourly",)


def combine_verdicts(verdicts: list[tuple[str, ...]]) -> tuple[str, ...]:
    """Single verdict for the model: strict majority across attributes, ties
    toward fewer periods. Hourly is always present."""
    if not verdicts:
        raise ConfigError("no attribute verdicts to combine")
    chosen = ["hourly"]
    for p in ("daily", "weekly"):
        if 2 * sum(p in v for v in verdicts) > len(verdicts):
            chosen.append(p)
    return tuple(chosen)


@dataclass
class TCorrReport:
    """Weighted per-sensor degrees, attribute means, gaps, and verdicts."""

    per_sensor: dict[str, np.ndarray]        # period -> (N, C) weighted
    averages: dict[str, np.ndarray]          # period -> (C,)
    deltas: dict[str, np.ndarray]            # 'hd'/'hw'/'dw' -> (C,)
    verdict: list[tuple[str, ...]]           # one subset per attribute
    eta: float = DEFAULT_ETA
    weights: TCorrWeights = field(default_factory=TCorrWeights)
    tau: int = 12
    dataset: str = ""

    @property
    def combined_verdict(self) -> tuple[str, ...]:
        return combine_verdicts(self.verdict)


def build_tcorr_report(x: SpatioTemporalTensor, spec: PeriodSpec,
                       eta: float = DEFAULT_ETA,
                       weights: TCorrWeights | None = None,
                       dataset: str = "", anchors=None) -> TCorrReport:
    weights = weights or TCorrWeights()
    per_sensor = {}
    averages = {}
    for p in PERIODS:
        raw = compute_tcorr(x, x, spec, p, eta=eta, anchors=anchors)
        per_sensor[p] = weighted_tcorr(raw, p, weights)
        averages[p] = per_sensor[p].mean(axis=0)
    deltas = {
        "hd": averages["daily"] - averages["hourly"],
        "hw": averages["weekly"] - averages["hourly"],
        "dw": averages["weekly"] - averages["daily"],
    }
    n_attr = x.data.shape[2]
    verdict = [select_periods(float(deltas["hd"][a]), float(deltas["hw"][a]),
                              float(deltas["dw"][a])) for a in range(n_attr)]
    return TCorrReport(per_sensor=per_sensor, averages=averages, deltas=deltas,
                       verdict=verdict, eta=eta, weights=weights, tau=spec.tau,
                       dataset=dataset)


# ---------------------------------------------------------------------------
# report IO

def report_to_dict(report: TCorrReport) -> dict:
    return {
        "dataset": report.dataset,
        "eta": report.eta,
        "tau": report.tau,
        "weights": {p: report.weights.for_period(p) for p in PERIODS},
        "per_period_means": {p: report.averages[p].tolist() for p in PERIODS},
        "deltas": {k: v.tolist() for k, v in report.deltas.items()},
        "verdict": [list(v) for v in report.verdict],
        "combined_verdict": list(report.combined_verdict),
        "per_sensor": {p: report.per_sensor[p].tolist() for p in PERIODS},
    }


def report_from_dict(payload: dict) -> TCorrReport:
    weights = TCorrWeights(**payload["weights"])
    return TCorrReport(
        per_sensor={p: np.asarray(payload["per_sensor"][p]) for p in PERIODS},
        averages={p: np.asarray(payload["per_period_means"][p]) for p in PERIODS},
        deltas={k: np.asarray(v) for k, v in payload["deltas"].items()},
        verdict=[tuple(v) for v in payload["verdict"]],
        eta=payload["eta"], weights=weights, tau=payload["tau"],
        dataset=payload["dataset"])


def save_report(report: TCorrReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(report_to_dict(report), fh, indent=2)
        fh.write("\n")


def load_report(path) -> TCorrReport:
    with open(path) as fh:
        return report_from_dict(json.load(fh))
