"""Gray-mapped square QAM with unit average symbol energy."""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError


def _bits_per_axis(order: int) -> int:
    k = int(round(math.log2(order))) if order > 1 else 0
    if order < 4 or 2**k != order or k % 2:
        raise ConfigError(f"QAM order {order} is not a square power of two >= 4")
    return k // 2


def pam_levels(order: int) -> np.ndarray:
    """Per-axis amplitude levels, ascending, scaled for unit QAM symbol energy."""
    q = _bits_per_axis(order)
    L = 2**q
    levels = np.arange(-(L - 1), L, 2, dtype=float)
    return levels / math.sqrt(2.0 * (L * L - 1) / 3.0)


def _gray(n):
    return n ^ (n >> 1)


def _axis_bits(index, q):
    # MSB-first bit matrix of the Gray label of each level index.
    label = _gray(np.asarray(index))
    shifts = np.arange(q - 1, -1, -1)
    return (label[..., None] >> shifts) & 1


def bits_per_symbol(order: int) -> int:
    return 2 * _bits_per_axis(order)


def modulate(bits, order: int) -> np.ndarray:
    """Map bits ``(..., n_symbols * log2(order))`` to complex symbols.

    Each symbol takes ``q`` bits for the in-phase level then ``q`` for the
    quadrature level; level index ``i`` carries the Gray label ``i ^ (i >> 1)``.
    """
    q = _bits_per_axis(order)
    bits = np.asarray(bits, dtype=np.int64)
    if bits.shape[-1] % (2 * q):
        raise ConfigError("bit count is not a multiple of bits per symbol")
    b = bits.reshape(bits.shape[:-1] + (-1, 2, q))
    weights = 1 << np.arange(q - 1, -1, -1)
    labels = b @ weights
    # invert the Gray code: index = label ^ (label >> 1) ^ (label >> 2) ...
    index = labels.copy()
    shift = labels >> 1
    while np.any(shift):
        index ^= shift
        shift >>= 1
    lv = pam_levels(order)
    return lv[index[..., 0]] + 1j * lv[index[..., 1]]


def demodulate(symbols, order: int) -> np.ndarray:
    """Hard-decision nearest-level demapping; inverse of :func:`modulate`."""
    q = _bits_per_axis(order)
    L = 2**q
    lv = pam_levels(order)
    step = lv[1] - lv[0]
    symbols = np.asarray(symbols)

    def decide(x):
        return np.clip(np.floor((x - lv[0]) / step + 0.5), 0, L - 1).astype(np.int64)

    bi = _axis_bits(decide(symbols.real), q)
    bq = _axis_bits(decide(symbols.imag), q)
    out = np.concatenate([bi, bq], axis=-1)
    return out.reshape(symbols.shape[:-1] + (-1,)).astype(np.uint8)


def random_bits(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.integers(0, 2, size=shape, dtype=np.uint8)
