"""Prototype filters for FBMC-OQAM.

Filters are stored as real, symmetric impulse responses of length
``eta * M + 1`` normalized to unit energy, so a matched-filter receiver has
unit gain.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

SYMMETRY_TOL = 1e-12
ENERGY_TOL = 1e-12


def _phydyas_coefficients() -> dict[int, tuple[float, ...]]:
    # Frequency-sampling values H_1 .. H_{eta-1} in closed form. They satisfy
    # the Nyquist pairing H_i^2 + H_{eta-i}^2 = 1 and make g(0) vanish exactly;
    # rounded to 6 digits they are the published 0.971960 / 0.707107 / 0.235147.
    c4 = 0.5 + math.sqrt(2.0) / 2.0
    h1_4 = (c4 + math.sqrt(2.0 - c4 * c4)) / 2.0
    h1_3 = (1.0 + math.sqrt(7.0)) / 4.0
    return {
        2: (math.sqrt(2.0) / 2.0,),
        3: (h1_3, math.sqrt(1.0 - h1_3 * h1_3)),
        4: (h1_4, math.sqrt(2.0) / 2.0, math.sqrt(1.0 - h1_4 * h1_4)),
    }


PHYDYAS_COEFFICIENTS = _phydyas_coefficients()


@dataclass(frozen=True)
class PrototypeFilter:
    """Real prototype impulse response ``g(k)``, ``k = 0 .. eta*M``.

    Attributes
    ----------
    taps : np.ndarray
        Filter coefficients, unit energy, symmetric about the center tap.
    overlap : int
        Overlapping factor ``eta`` (filter span in symbol intervals).
    M : int
        Samples per symbol interval.
    name : str
        Free-form label used in reports.
    """

    taps: np.ndarray = field(repr=False)
    overlap: int
    M: int
    name: str = "custom"

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=float)
        if taps.ndim != 1:
            raise ConfigError("filter taps must be one-dimensional")
        if self.M < 1 or self.overlap < 1:
            raise ConfigError("M and overlap factor must be positive")
        if taps.size != self.overlap * self.M + 1:
            raise ConfigError(
                f"filter length {taps.size} != eta*M+1 = {self.overlap * self.M + 1}"
            )
        if np.max(np.abs(taps - taps[::-1])) > SYMMETRY_TOL:
            raise ConfigError("filter taps are not symmetric about the center")
        if abs(float(np.dot(taps, taps)) - 1.0) > ENERGY_TOL:
            raise ConfigError("filter taps are not unit energy")
        taps = taps.copy()
        taps.setflags(write=False)
        object.__setattr__(self, "taps", taps)

    @property
    def eta(self) -> int:
        return self.overlap

    @property
    def length(self) -> int:
        return self.taps.size

    @classmethod
    def from_taps(cls, taps, M: int, name: str = "custom") -> "PrototypeFilter":
        """Normalize arbitrary symmetric taps to unit energy and wrap them.

        The overlap factor is inferred from ``(len(taps) - 1) / M``.
        """
        taps = np.asarray(taps, dtype=float)
        if M < 1:
            raise ConfigError("M must be positive")
        if taps.size < 2 or (taps.size - 1) % M:
            raise ConfigError(
                f"filter length {taps.size} is not of the form eta*M+1 for M={M}"
            )
        energy = float(np.dot(taps, taps))
        if energy <= 0.0:
            raise ConfigError("filter has zero energy")
        taps = taps / math.sqrt(energy)
        # Symmetrize away last-bit differences introduced by the text round trip.
        if np.max(np.abs(taps - taps[::-1])) <= 1e-9:
            taps = 0.5 * (taps + taps[::-1])
            taps = taps / math.sqrt(float(np.dot(taps, taps)))
        return cls(taps, (taps.size - 1) // M, M, name)


def phydyas_filter(M: int, eta: int = 4) -> PrototypeFilter:
    """PHYDYAS prototype built by frequency sampling.

    ``g(k) ∝ 1 + 2 Σ_{i=1}^{eta-1} (-1)^i H_i cos(2π i k / (eta M))`` for
    ``k = 0 .. eta*M``, normalized to unit energy.

    Raises
    ------
    ConfigError
        If ``eta`` has no coefficient table (supported: 2, 3, 4).
    """
    if eta not in PHYDYAS_COEFFICIENTS:
        supported = ", ".join(str(e) for e in sorted(PHYDYAS_COEFFICIENTS))
        raise ConfigError(f"PHYDYAS overlap factor {eta} unsupported (supported: {supported})")
    if M < 1:
        raise ConfigError("M must be positive")
    k = np.arange(eta * M + 1)
    g = np.ones(k.size)
    for i, h in enumerate(PHYDYAS_COEFFICIENTS[eta], start=1):
        g += 2.0 * (-1) ** i * h * np.cos(2.0 * np.pi * i * k / (eta * M))
    # cos(2πi(ηM-k)/(ηM)) == cos(2πik/(ηM)); force exact symmetry.
    g = 0.5 * (g + g[::-1])
    g /= math.sqrt(float(np.dot(g, g)))
    return PrototypeFilter(g, eta, M, name="phydyas")


def rectangular_filter(M: int) -> PrototypeFilter:
    """Unit-energy rectangular pulse of length ``M + 1`` (``eta = 1``)."""
    return PrototypeFilter(np.full(M + 1, 1.0 / math.sqrt(M + 1)), 1, M, name="rect")


def load_filter_file(path: str | os.PathLike, M: int) -> PrototypeFilter:
    """Read one decimal tap per line and return a unit-energy filter.

    Blank lines are ignored. ``eta`` is inferred from the tap count.
    """
    values = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                values.append(float(text))
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: not a number: {text!r}") from None
    name = os.path.splitext(os.path.basename(os.fspath(path)))[0]
    return PrototypeFilter.from_taps(np.array(values), M, name=name)


def save_filter_file(filt: PrototypeFilter, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for tap in filt.taps:
            fh.write(f"{float(tap)!r}\n")


def _crosstalk(g, M, m0, n0, m, n):
    # Noise-free demodulator output at (m, n) for a unit PAM impulse at (m0, n0).
    L = g.size - 1
    h = M // 2
    lo = max(n0, n) * h
    hi = min(n0, n) * h + L
    if lo > hi:
        return 0.0
    k = np.arange(lo, hi + 1)
    prod = g[k - n0 * h] * g[k - n * h]
    acc = np.sum(prod * np.exp(2j * np.pi * (m0 - m) * k / M))
    phase = 1j ** ((m0 + n0 - m - n) % 4)
    return float(np.real(phase * acc))


def orthogonality_report(
    filt: PrototypeFilter, n_subcarriers: int | None = None, n_symbols: int | None = None
) -> float:
    """Worst-case self-interference of the OQAM lattice, in dB.

    Each unit PAM impulse on a small grid is modulated and demodulated
    noise-free; the energy that lands on all other grid positions is summed,
    and the maximum over impulse positions is returned.

    Parameters
    ----------
    filt : PrototypeFilter
    n_subcarriers : int, optional
        Adjacent subcarriers in the test grid; default ``min(M, 8)``.
    n_symbols : int, optional
        PAM time slots in the test grid; default ``2*eta + 2`` so interior
        impulses see the full filter overlap.
    """
    M = filt.M
    if M % 2:
        raise ConfigError("M must be even for OQAM staggering")
    n_sc = min(M, 8) if n_subcarriers is None else int(n_subcarriers)
    n_sym = 2 * filt.eta + 2 if n_symbols is None else int(n_symbols)
    if n_sc < 1 or n_sym < 1:
        raise ConfigError("orthogonality grid is empty")
    if n_sc > M:
        raise ConfigError("more test subcarriers than M")
    g = filt.taps
    positions = [(m, n) for m in range(n_sc) for n in range(n_sym)]
    worst = 0.0
    for m0, n0 in positions:
        leak = 0.0
        for m, n in positions:
            if (m, n) != (m0, n0):
                leak += _crosstalk(g, M, m0, n0, m, n) ** 2
        worst = max(worst, leak)
    if worst <= 0.0:
        return -math.inf
    return 10.0 * math.log10(worst)
