"""Time-averaged turbulence statistics and Welch power spectral density.

Statistics accumulate in 64-bit regardless of the field precision, in a
single pass over the stream of fields.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from .fields import FieldGrid


@dataclass
class FlowStats:
    """Mean field plus second-moment turbulence quantities."""

    mean_u: np.ndarray
    mean_v: np.ndarray
    reynolds_uv: np.ndarray  # <u'v'>
    tke: np.ndarray  # (<u'^2> + <v'^2>) / 2, two-component
    count: int


class FlowStatsAccumulator:
    """Single-pass accumulator of means and second moments over fields."""

    def __init__(self):
        self.count = 0
        self._sums = None

    def add(self, grid: FieldGrid) -> None:
        u = np.asarray(grid.u, dtype=np.float64)
        v = np.asarray(grid.v, dtype=np.float64)
        if self._sums is None:
            self._sums = {
                "u": np.zeros_like(u),
                "v": np.zeros_like(v),
                "uu": np.zeros_like(u),
                "vv": np.zeros_like(v),
                "uv": np.zeros_like(u),
            }
        elif u.shape != self._sums["u"].shape:
            raise ValueError(
                f"field shape {u.shape} does not match accumulated "
                f"{self._sums['u'].shape}"
            )
        s = self._sums
        s["u"] += u
        s["v"] += v
        s["uu"] += u * u
        s["vv"] += v * v
        s["uv"] += u * v
        self.count += 1

    def finalize(self) -> FlowStats:
        if self.count < 2:
            raise ValueError(f"need at least 2 fields, got {self.count}")
        n = self.count
        s = self._sums
        mean_u = s["u"] / n
        mean_v = s["v"] / n
        var_u = np.maximum(s["uu"] / n - mean_u * mean_u, 0.0)
        var_v = np.maximum(s["vv"] / n - mean_v * mean_v, 0.0)
        reynolds = s["uv"] / n - mean_u * mean_v
        tke = 0.5 * (var_u + var_v)
        return FlowStats(mean_u, mean_v, reynolds, tke, n)


def accumulate_stats(fields) -> FlowStats:
    """Fold a stream of FieldGrids into FlowStats (time averages)."""
    acc = FlowStatsAccumulator()
    for grid in fields:
        acc.add(grid)
    return acc.finalize()


@dataclass
class PsdSeries:
    """One-sided Welch power spectral density, optionally with a slope fit."""

    frequencies: np.ndarray  # Hz, strictly increasing
    power: np.ndarray  # density, >= 0
    slope: float | None = None  # log-log fit over `band`
    band: tuple[float, float] | None = None


def welch_segment_length(n_samples: int, target: int = 256) -> int:
    """Segment length: `target`, or the largest power of two that fits."""
    if n_samples >= target:
        return target
    return 1 << (n_samples.bit_length() - 1)


def psd(series, sample_rate: float, band=None) -> PsdSeries:
    """Welch PSD of one time series: Hann window, 50% overlap, mean removed.

    `band` is an optional (f_lo, f_hi) range over which a log-log slope is
    fitted by least squares.
    """
    series = np.asarray(series, dtype=np.float64).ravel()
    if series.size < 64:
        raise ValueError(f"series too short for a PSD: {series.size} < 64 samples")
    if not (sample_rate > 0):
        raise ValueError(f"sample_rate must be positive, got {sample_rate}")
    nperseg = welch_segment_length(series.size)
    freqs, power = signal.welch(
        series,
        fs=sample_rate,
        window="hann",
        nperseg=nperseg,
        noverlap=nperseg // 2,
        detrend="constant",
        scaling="density",
        return_onesided=True,
    )
    slope = fit_loglog_slope(freqs, power, band) if band is not None else None
    return PsdSeries(freqs, power, slope, band)


def fit_loglog_slope(freqs, power, band) -> float:
    """Least-squares slope of log10(power) vs log10(frequency) over band."""
    freqs = np.asarray(freqs, dtype=np.float64)
    power = np.asarray(power, dtype=np.float64)
    lo, hi = band
    keep = (freqs >= lo) & (freqs <= hi) & (freqs > 0) & (power > 0)
    if keep.sum() < 2:
        raise ValueError(f"band {band} selects fewer than 2 usable bins")
    coeffs = np.polyfit(np.log10(freqs[keep]), np.log10(power[keep]), 1)
    return float(coeffs[0])
