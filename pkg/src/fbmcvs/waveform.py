"""FBMC-OQAM synthesis and matched-filter analysis.

The transmit burst is

    s(k) = Σ_{m∈Ω} Σ_n a[m, n] g(k - n M/2) exp(j2π m k / M) exp(j(m + n)π/2)

with real PAM symbols ``a`` staggered by half a symbol interval. Synthesis
uses one length-M IFFT per half-symbol followed by overlap-add of the
windowed periodic extension, which is exact (no approximation) because the
subcarrier exponentials are M-periodic in ``k``.

PAM grids are plain ``ndarray`` objects of shape ``(len(active), N)``; batch
variants accept a leading batch axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .prototype import PrototypeFilter


def centered_subcarriers(M: int, count: int) -> tuple[int, ...]:
    """``count`` contiguous subcarrier indices centered in ``[0, M)``."""
    if not 1 <= count <= M:
        raise ConfigError(f"cannot place {count} active subcarriers among {M}")
    start = (M - count) // 2
    return tuple(range(start, start + count))


@dataclass(frozen=True)
class BurstConfig:
    """Waveform and tail-shortening parameters of one burst.

    Time indices are absolute: the first data pulse starts at ``k = 0`` and the
    last data sample sits at ``L_burst = (N-1) M/2 + eta M``. Boundaries left as
    ``None`` default to one half symbol interval beyond the first/last PAM
    pulse centers.
    """

    M: int
    active: tuple[int, ...]
    N: int
    eta: int = 4
    V: int = 6
    gamma: float = 0.1
    K_b_burst: int | None = None
    K_e_burst: int | None = None

    def __post_init__(self):
        active = tuple(int(m) for m in self.active)
        object.__setattr__(self, "active", active)
        if self.M < 2 or self.M % 2:
            raise ConfigError("M must be a positive even integer")
        if self.N < 2 or self.N % 2:
            raise ConfigError("N must be a positive even integer")
        if self.eta < 1:
            raise ConfigError("overlap factor must be positive")
        if self.V < 1:
            raise ConfigError("V must be at least 1")
        if not self.gamma >= 0.0:
            raise ConfigError("gamma must be nonnegative")
        if not active:
            raise ConfigError("active subcarrier set is empty")
        if len(set(active)) != len(active):
            raise ConfigError("active subcarriers must be distinct")
        if min(active) < 0 or max(active) >= self.M:
            raise ConfigError("active subcarriers must lie in [0, M)")
        if self.K_b_burst is None:
            object.__setattr__(self, "K_b_burst", self.K_b_symbol - self.M // 2)
        if self.K_e_burst is None:
            object.__setattr__(self, "K_e_burst", self.K_f_symbol + self.M // 2)
        if self.K_b_burst > self.K_e_burst:
            raise ConfigError("K_b_burst must not exceed K_e_burst")

    @classmethod
    def reference(cls, M: int = 256, n_active: int = 200, N: int = 14, **kw) -> "BurstConfig":
        """Default scenario: 200 centered subcarriers of 256, 14 PAM slots."""
        return cls(M=M, active=centered_subcarriers(M, n_active), N=N, **kw)

    def with_gamma(self, gamma: float) -> "BurstConfig":
        return replace(self, gamma=float(gamma))

    @property
    def n_active(self) -> int:
        return len(self.active)

    @property
    def half(self) -> int:
        return self.M // 2

    @property
    def K_b_symbol(self) -> int:
        """Center of the first PAM pulse."""
        return self.eta * self.M // 2

    @property
    def K_f_symbol(self) -> int:
        """Center of the final PAM pulse."""
        return (self.N - 1) * self.half + self.eta * self.M // 2

    @property
    def K_ref(self) -> float:
        """End of a CP-free OFDM reference carrying the same N/2 symbols."""
        return self.K_f_symbol + self.M / 4

    @property
    def overhead(self) -> float:
        return self.K_e_burst - self.K_ref

    @property
    def L_burst(self) -> int:
        """Index of the last sample of the untreated burst."""
        return (self.N - 1) * self.half + self.eta * self.M

    @property
    def burst_length(self) -> int:
        return self.L_burst + 1

    @property
    def kept_length(self) -> int:
        return self.K_e_burst - self.K_b_burst + 1


@dataclass(frozen=True)
class ComplexSignal:
    """Complex baseband samples; ``samples[i]`` sits at time ``origin + i``."""

    samples: np.ndarray = field(repr=False)
    origin: int = 0

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=complex))
        object.__setattr__(self, "origin", int(self.origin))

    def __len__(self):
        return self.samples.size

    @property
    def stop(self) -> int:
        """One past the last covered index."""
        return self.origin + self.samples.size

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.origin, self.stop)

    def at(self, k) -> np.ndarray:
        """Samples at absolute indices ``k``; zero outside the stored span."""
        k = np.asarray(k)
        out = np.zeros(k.shape, dtype=complex)
        rel = k - self.origin
        ok = (rel >= 0) & (rel < self.samples.size)
        out[ok] = self.samples[rel[ok]]
        return out

    def span(self, lo: int, hi: int) -> "ComplexSignal":
        """The signal on ``[lo, hi]`` (inclusive), zero-extended as needed."""
        return ComplexSignal(self.at(np.arange(lo, hi + 1)), lo)

    def energy(self, lo: int | None = None, hi: int | None = None) -> float:
        """Energy over ``[lo, hi]`` (inclusive); open ends default to the full span."""
        lo = self.origin if lo is None else max(lo, self.origin)
        hi = self.stop - 1 if hi is None else min(hi, self.stop - 1)
        if hi < lo:
            return 0.0
        seg = self.samples[lo - self.origin : hi - self.origin + 1]
        return float(np.vdot(seg, seg).real)

    def __add__(self, other: "ComplexSignal") -> "ComplexSignal":
        lo = min(self.origin, other.origin)
        hi = max(self.stop, other.stop)
        out = np.zeros(hi - lo, dtype=complex)
        out[self.origin - lo : self.stop - lo] += self.samples
        out[other.origin - lo : other.stop - lo] += other.samples
        return ComplexSignal(out, lo)

    def __mul__(self, c) -> "ComplexSignal":
        return ComplexSignal(self.samples * c, self.origin)

    __rmul__ = __mul__


_QUARTER_TURNS = np.array([1.0, 1j, -1.0, -1j])


def quarter_phase(n) -> np.ndarray:
    """Exact ``exp(j n π/2)`` for integer ``n``."""
    return _QUARTER_TURNS[np.mod(n, 4)]


# QAM <-> PAM ----------------------------------------------------------------


def qam_to_pam(symbols) -> np.ndarray:
    """Split complex symbols ``(..., |Ω|, N/2)`` into PAM grids ``(..., |Ω|, N)``.

    Even time slots carry the real parts, odd slots the imaginary parts.
    """
    symbols = np.asarray(symbols)
    if symbols.ndim < 2:
        raise ConfigError("expected QAM symbols shaped (subcarriers, N/2)")
    out = np.empty(symbols.shape[:-1] + (2 * symbols.shape[-1],))
    out[..., 0::2] = symbols.real
    out[..., 1::2] = symbols.imag
    return out


def pam_to_qam(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.shape[-1] % 2:
        raise ConfigError("PAM grid needs an even number of time slots")
    return grid[..., 0::2] + 1j * grid[..., 1::2]


def check_grid(grid, config: BurstConfig) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.shape[-2:] != (config.n_active, config.N):
        raise ConfigError(
            f"grid shape {grid.shape[-2:]} does not match (|Ω|, N) = "
            f"({config.n_active}, {config.N})"
        )
    return grid


# Synthesis --------------------------------------------------------------------


def synthesize_slots(values, slots, active: Sequence[int], filt: PrototypeFilter):
    """Overlap-add synthesis of PAM symbols on arbitrary half-symbol slots.

    Parameters
    ----------
    values : array_like, shape (..., |Ω|, Q)
        Real symbol amplitudes.
    slots : sequence of int, length Q
        Consecutive half-symbol time indices ``n`` (may be negative).
    active : sequence of int
        Subcarrier indices matching the second-to-last axis of ``values``.
    filt : PrototypeFilter

    Returns
    -------
    samples : np.ndarray, shape (..., (Q-1) M/2 + eta M + 1)
    origin : int
        Absolute time index of ``samples[..., 0]`` (``slots[0] * M/2``).
    """
    values = np.asarray(values, dtype=float)
    slots = np.asarray(slots, dtype=int)
    active = np.asarray(active, dtype=int)
    M = filt.M
    h = M // 2
    Q = slots.size
    if Q == 0:
        raise ConfigError("no time slots to synthesize")
    if np.any(np.diff(slots) != 1):
        raise ConfigError("time slots must be consecutive")
    if values.shape[-2:] != (active.size, Q):
        raise ConfigError("symbol block does not match (subcarriers, slots)")
    batch = values.shape[:-2]
    Lf = filt.length
    out = np.zeros(batch + ((Q - 1) * h + Lf,), dtype=complex)

    phase = quarter_phase(active[:, None] + slots[None, :])
    spectrum = np.zeros(batch + (M, Q), dtype=complex)
    spectrum[..., active, :] = values * phase
    # x_n(k) = Σ_m c[m, n] exp(j2π m k / M), M-periodic in absolute k
    periodic = np.fft.ifft(spectrum, axis=-2) * M
    reps = -(-(Lf + h) // M) + 1
    tiled = np.concatenate([periodic] * reps, axis=-2)
    g = filt.taps
    for i, n in enumerate(slots):
        start = (n * h) % M
        seg = tiled[..., start : start + Lf, i]
        out[..., i * h : i * h + Lf] += seg * g
    return out, int(slots[0]) * h


def synthesize(grid, filt: PrototypeFilter, config: BurstConfig) -> ComplexSignal:
    """FBMC-OQAM burst for one PAM grid, covering ``k = 0 .. L_burst``."""
    grid = check_grid(grid, config)
    if grid.ndim != 2:
        raise ConfigError("synthesize expects a single grid; use synthesize_many")
    samples, origin = synthesize_slots(grid, np.arange(config.N), config.active, filt)
    return ComplexSignal(samples, origin)


def synthesize_many(grids, filt: PrototypeFilter, config: BurstConfig) -> np.ndarray:
    """Batch synthesis; returns ``(batch, burst_length)`` with origin 0."""
    grids = check_grid(grids, config)
    samples, _ = synthesize_slots(grids, np.arange(config.N), config.active, filt)
    return samples


def synthesize_naive(grid, filt: PrototypeFilter, config: BurstConfig) -> ComplexSignal:
    """Direct sample-by-sample evaluation of the modulation sum (reference path)."""
    grid = check_grid(grid, config)
    M = filt.M
    k = np.arange(config.burst_length)
    s = np.zeros(k.size, dtype=complex)
    g = filt.taps
    for i, m in enumerate(config.active):
        carrier = np.exp(2j * np.pi * m * k / M)
        for n in range(config.N):
            x = k - n * (M // 2)
            pulse = np.where((x >= 0) & (x < g.size), g[np.clip(x, 0, g.size - 1)], 0.0)
            s += grid[i, n] * pulse * carrier * np.exp(1j * (m + n) * np.pi / 2)
    return ComplexSignal(s, 0)


# Analysis ---------------------------------------------------------------------


def demodulate_slots(samples, origin: int, slots, active, filt: PrototypeFilter) -> np.ndarray:
    """Matched-filter outputs ``Re[e^{-j(m+n)π/2} Σ_k r(k) g(k-nM/2) e^{-j2πmk/M}]``.

    ``samples`` may carry a leading batch axis; samples outside the given
    span are taken as zero. Returns ``(..., |Ω|, len(slots))``.
    """
    samples = np.asarray(samples, dtype=complex)
    slots = np.asarray(slots, dtype=int)
    active = np.asarray(active, dtype=int)
    M = filt.M
    h = M // 2
    g = filt.taps
    Lf = g.size
    batch = samples.shape[:-1]
    n_samp = samples.shape[-1]
    width = -(-Lf // M) * M
    folded = np.zeros(batch + (M, slots.size), dtype=complex)
    for i, n in enumerate(slots):
        lo = n * h - origin
        seg = np.zeros(batch + (width,), dtype=complex)
        a, b = max(lo, 0), min(lo + Lf, n_samp)
        if a < b:
            seg[..., a - lo : b - lo] = samples[..., a:b] * g[a - lo : b - lo]
        # residue of absolute index (n*h + j) modulo M
        wrapped = seg.reshape(batch + (width // M, M)).sum(axis=-2)
        folded[..., :, i] = np.roll(wrapped, (n * h) % M, axis=-1)
    spectrum = np.fft.fft(folded, axis=-2)[..., active, :]
    phase = quarter_phase(-(active[:, None] + slots[None, :]))
    return np.real(spectrum * phase)


def demodulate(signal: ComplexSignal, filt: PrototypeFilter, config: BurstConfig) -> np.ndarray:
    """Estimate the PAM grid ``(|Ω|, N)`` of a burst aligned at time 0."""
    return demodulate_slots(signal.samples, signal.origin, np.arange(config.N), config.active, filt)


def demodulate_many(samples, origin: int, filt: PrototypeFilter, config: BurstConfig) -> np.ndarray:
    return demodulate_slots(samples, origin, np.arange(config.N), config.active, filt)
