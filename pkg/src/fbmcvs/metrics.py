"""Figures of merit for shortened bursts.

Energy levels are quoted in dBc. Two references are used:

* :func:`reference_energy` : average burst energy per PAM symbol,
  ``Σ|s|² / (|Ω| N)`` (≈ 1/2 for unit-energy QAM);
* :func:`symbol_energy` : energy of one real-valued FBMC symbol, i.e. one
  PAM time slot across all active subcarriers, ``Σ|s|² / N``. Tail and
  cancellation energies are reported against this one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal as sp_signal
from scipy import stats

from .errors import ConfigError
from .waveform import BurstConfig, ComplexSignal

FLOOR_DB = -200.0


def to_db(x) -> float:
    """``10 log10(x)`` clamped at :data:`FLOOR_DB` for zero input."""
    x = float(x)
    if x <= 0.0:
        return FLOOR_DB
    return max(10.0 * math.log10(x), FLOOR_DB)


def _samples(signal):
    if isinstance(signal, ComplexSignal):
        return signal.samples
    return np.asarray(signal, dtype=complex)


# Energies -----------------------------------------------------------------------


def reference_energy(grid, signal: ComplexSignal, config: BurstConfig) -> float:
    """Average untreated-burst energy per PAM symbol."""
    grid = np.asarray(grid)
    if grid.size == 0:
        raise ConfigError("empty grid")
    return float(np.sum(np.abs(_samples(signal)) ** 2)) / (config.n_active * config.N)


def symbol_energy(signal: ComplexSignal, config: BurstConfig) -> float:
    """Untreated-burst energy per real-valued FBMC symbol (all subcarriers)."""
    return float(np.sum(np.abs(_samples(signal)) ** 2)) / config.N


def tail_energy_dbc(signal: ComplexSignal, K_e: int, E_ref: float) -> float:
    """Energy beyond ``K_e`` relative to ``E_ref``, in dB (floored at -200)."""
    if not E_ref > 0:
        raise ConfigError("reference energy must be positive")
    return to_db(signal.energy(K_e + 1, None) / E_ref)


def head_energy_dbc(signal: ComplexSignal, K_b: int, E_ref: float) -> float:
    if not E_ref > 0:
        raise ConfigError("reference energy must be positive")
    return to_db(signal.energy(None, K_b - 1) / E_ref)


def outside_energy(signal: ComplexSignal, K_b: int, K_e: int) -> float:
    """Energy of both tails: everything before ``K_b`` and after ``K_e``."""
    return signal.energy(None, K_b - 1) + signal.energy(K_e + 1, None)


def batch_outside_energy(samples, origin: int, K_b: int, K_e: int) -> np.ndarray:
    samples = np.asarray(samples)
    k = np.arange(origin, origin + samples.shape[-1])
    mask = (k < K_b) | (k > K_e)
    return np.sum(np.abs(samples[..., mask]) ** 2, axis=-1)


def batch_inside_energy(samples, origin: int, K_b: int, K_e: int) -> np.ndarray:
    samples = np.asarray(samples)
    k = np.arange(origin, origin + samples.shape[-1])
    mask = (k >= K_b) & (k <= K_e)
    return np.sum(np.abs(samples[..., mask]) ** 2, axis=-1)


@dataclass(frozen=True)
class EnergyReport:
    """Residual-tail (ξ1) and in-burst cancellation (ξ2) energy in dBc."""

    xi1_dbc: float
    xi2_dbc: float
    reference_energy: float

    def __post_init__(self):
        if not self.reference_energy > 0:
            raise ConfigError("reference energy must be positive")


def energy_report(xi1, xi2, reference) -> EnergyReport:
    """Average linear energies over bursts, then convert to dBc.

    ``xi1``, ``xi2`` and ``reference`` are per-burst arrays; each burst is
    normalized by its own reference before averaging.
    """
    xi1 = np.atleast_1d(np.asarray(xi1, dtype=float))
    xi2 = np.atleast_1d(np.asarray(xi2, dtype=float))
    reference = np.atleast_1d(np.asarray(reference, dtype=float))
    return EnergyReport(
        to_db(np.mean(xi1 / reference)),
        to_db(np.mean(xi2 / reference)),
        float(np.mean(reference)),
    )


# EVM ---------------------------------------------------------------------------


def edge_evm(grid_in, grid_out, edge_depth: int = 1) -> float:
    """Mean squared error of the first and last ``edge_depth`` PAM slots.

    Normalized by the mean PAM symbol energy of ``grid_in``; grids may carry
    leading batch axes. Returns dB, floored at -200.
    """
    a = np.asarray(grid_in, dtype=float)
    b = np.asarray(grid_out, dtype=float)
    if a.shape != b.shape:
        raise ConfigError(f"grid shapes differ: {a.shape} vs {b.shape}")
    N = a.shape[-1]
    if edge_depth < 1 or 2 * edge_depth > N:
        raise ConfigError(f"edge depth {edge_depth} invalid for N={N}")
    cols = np.r_[0:edge_depth, N - edge_depth : N]
    err = np.mean((b[..., cols] - a[..., cols]) ** 2)
    power = np.mean(a * a)
    if power <= 0:
        raise ConfigError("reference grid has zero energy")
    return to_db(err / power)


def evm_db(grid_in, grid_out) -> float:
    """Mean squared error over the whole grid, in dB relative to symbol energy."""
    a = np.asarray(grid_in, dtype=float)
    b = np.asarray(grid_out, dtype=float)
    return to_db(np.mean((b - a) ** 2) / np.mean(a * a))


# PAPR --------------------------------------------------------------------------


def papr_db(signal, K_b: int | None = None, K_e: int | None = None) -> float:
    """Peak-to-average power ratio over ``[K_b, K_e]`` (default: whole span)."""
    if isinstance(signal, ComplexSignal):
        lo = signal.origin if K_b is None else K_b
        hi = signal.stop - 1 if K_e is None else K_e
        x = signal.at(np.arange(lo, hi + 1))
    else:
        x = np.asarray(signal, dtype=complex)
    if x.size == 0:
        raise ConfigError("empty signal")
    p = np.abs(x) ** 2
    mean = float(np.mean(p))
    if mean <= 0:
        raise ConfigError("zero-energy signal has no PAPR")
    return 10.0 * math.log10(float(np.max(p)) / mean)


def batch_papr_db(samples, origin: int, K_b: int, K_e: int) -> np.ndarray:
    samples = np.asarray(samples)
    p = np.abs(samples[..., K_b - origin : K_e - origin + 1]) ** 2
    mean = np.mean(p, axis=-1)
    if np.any(mean <= 0):
        raise ConfigError("zero-energy signal has no PAPR")
    return 10.0 * np.log10(np.max(p, axis=-1) / mean)


def papr_ccdf(values, thresholds) -> np.ndarray:
    """Fraction of ``values`` strictly above each threshold."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ConfigError("no PAPR samples")
    t = np.asarray(thresholds, dtype=float)
    return (v.size - np.searchsorted(v, t, side="right")) / v.size


def papr_at_ccdf(values, probability: float) -> float:
    """Smallest threshold whose CCDF is at most ``probability``."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ConfigError("no PAPR samples")
    n_above = int(math.floor(probability * v.size))
    idx = min(max(v.size - n_above - 1, 0), v.size - 1)
    return float(v[idx])


# PSD ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PsdEstimate:
    """Welch PSD in subcarrier-frequency units on ``[0, M)``.

    ``power`` is the linear estimate normalized so its mean over
    active-subcarrier bins is one; ``scale`` is that in-band mean before
    normalization and ``segments`` counts averaged periodograms.
    """

    frequencies: np.ndarray
    power: np.ndarray
    segments: int
    active_mask: np.ndarray
    scale: float = 1.0

    @property
    def power_db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.maximum(10.0 * np.log10(self.power), FLOOR_DB)

    def at(self, subcarrier: float) -> float:
        """PSD in dB at the bin nearest to a (possibly fractional) subcarrier."""
        M = self.frequencies.size * (self.frequencies[1] - self.frequencies[0])
        f = subcarrier % M
        i = int(np.argmin(np.abs(self.frequencies - f)))
        return float(self.power_db[i])


def _active_bins(freqs, active, M):
    nearest = np.rint(freqs).astype(int) % M
    close = np.abs(freqs - np.rint(freqs)) < 0.5
    return close & np.isin(nearest, np.asarray(active))


def psd_welch(
    stream,
    M: int,
    active,
    fft_size: int | None = None,
    segment: int | None = None,
    overlap: float = 0.5,
) -> PsdEstimate:
    """Welch estimate with a Hann window.

    Defaults: segment = fft_size = 4M, 50% overlap. The result is normalized
    so the mean linear level over active-subcarrier bins is exactly 0 dB.
    """
    x = _samples(stream)
    fft_size = 4 * M if fft_size is None else int(fft_size)
    if fft_size < 1 or fft_size & (fft_size - 1):
        raise ConfigError(f"fft_size {fft_size} is not a power of two")
    segment = fft_size if segment is None else int(segment)
    if segment > fft_size:
        raise ConfigError("segment longer than fft_size")
    if x.size < segment:
        raise ConfigError("stream shorter than one Welch segment")
    noverlap = int(round(overlap * segment))
    _, pxx = sp_signal.welch(
        x,
        window="hann",
        nperseg=segment,
        noverlap=noverlap,
        nfft=fft_size,
        detrend=False,
        return_onesided=False,
        scaling="density",
    )
    freqs = np.arange(fft_size) * (M / fft_size)
    mask = _active_bins(freqs, active, M)
    if not np.any(mask):
        raise ConfigError("no FFT bin falls on an active subcarrier")
    scale = float(np.mean(pxx[mask]))
    step = segment - noverlap
    segments = 1 + (x.size - segment) // step
    return PsdEstimate(freqs, pxx / scale, segments, mask, scale)


def merge_psd(estimates) -> PsdEstimate:
    """Segment-weighted average of unnormalized estimates, renormalized.

    Summation follows the input order, so a fixed order gives bit-identical
    results.
    """
    estimates = list(estimates)
    if not estimates:
        raise ConfigError("nothing to merge")
    total = sum(e.segments for e in estimates)
    acc = sum(e.power * (e.scale * e.segments) for e in estimates) / total
    mask = estimates[0].active_mask
    scale = float(np.mean(acc[mask]))
    return PsdEstimate(estimates[0].frequencies, acc / scale, total, mask, scale)


# BER ---------------------------------------------------------------------------


def ber_count(tx_bits, rx_bits) -> tuple[int, int, float]:
    """Bit errors, bits compared, and their ratio."""
    tx = np.asarray(tx_bits)
    rx = np.asarray(rx_bits)
    if tx.shape != rx.shape:
        raise ConfigError(f"bit stream shapes differ: {tx.shape} vs {rx.shape}")
    total = int(tx.size)
    errors = int(np.count_nonzero(tx != rx))
    return errors, total, (errors / total if total else 0.0)


def ber_confidence(errors: int, total: int, level: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a bit error ratio."""
    if total <= 0:
        raise ConfigError("no bits counted")
    ci = stats.binomtest(int(errors), int(total)).proportion_ci(level, method="wilson")
    return float(ci.low), float(ci.high)
