"""Slow reference implementations used only by the tests.

Nothing here imports the package's signal-processing code, so agreement with
the fast paths is evidence rather than tautology.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import stats


def phydyas_taps(M, H):
    """Frequency-sampling prototype, unit energy, length len(H)*M + 1."""
    eta = len(H)
    k = np.arange(eta * M + 1)
    g = np.ones(k.size)
    for i, h in enumerate(H[1:], start=1):
        g += 2 * (-1) ** i * h * np.cos(2 * np.pi * i * k / (eta * M))
    return g / np.linalg.norm(g)


def pulse(g, M, m, n, k):
    """One OQAM basis function on absolute sample indices ``k``."""
    idx = k - n * M // 2
    inside = (idx >= 0) & (idx < g.size)
    out = np.zeros(k.size, dtype=complex)
    out[inside] = g[idx[inside]]
    return out * np.exp(2j * np.pi * m * k / M) * (1j ** ((m + n) % 4))


def synthesize(grid, g, M, active, slots, k):
    """Double loop over subcarriers and time slots."""
    s = np.zeros(k.size, dtype=complex)
    for p, m in enumerate(active):
        for q, n in enumerate(slots):
            if grid[p, q] != 0:
                s += grid[p, q] * pulse(g, M, m, n, k)
    return s


def demodulate(s, g, M, active, slots, k):
    out = np.zeros((len(active), len(slots)))
    for p, m in enumerate(active):
        for q, n in enumerate(slots):
            out[p, q] = np.real(np.sum(s * np.conj(pulse(g, M, m, n, k))))
    return out


def design_matrix(g, M, active, slots, k):
    """Columns ordered with the subcarrier index running fastest."""
    cols = [pulse(g, M, m, n, k) for n in slots for m in active]
    return np.stack(cols, axis=1)


def regularized_solution(G1, G2, gamma):
    """B = argmin ||G1 B - I||^2 + gamma ||G2 B||^2 via a stacked lstsq."""
    t1 = np.vstack([G1.real, G1.imag])
    t2 = np.vstack([G2.real, G2.imag])
    A = np.vstack([t1, math.sqrt(gamma) * t2])
    rhs = np.vstack([np.eye(t1.shape[0]), np.zeros((t2.shape[0], t1.shape[0]))])
    B, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    return B


def gray_pam_ber(levels_per_axis, sigma):
    """Exact bit error probability of Gray-labeled PAM with unit spacing 2.

    Sums, over every transmitted and decided level pair, the decision
    probability times the Hamming distance of the Gray labels.
    """
    L = levels_per_axis
    q = int(math.log2(L))
    amp = np.arange(-(L - 1), L, 2, dtype=float)
    edges = np.concatenate([[-np.inf], (amp[:-1] + amp[1:]) / 2, [np.inf]])
    gray = [i ^ (i >> 1) for i in range(L)]
    total = 0.0
    for i, j in itertools.product(range(L), repeat=2):
        p = stats.norm.cdf((edges[j + 1] - amp[i]) / sigma) - stats.norm.cdf((edges[j] - amp[i]) / sigma)
        total += p * bin(gray[i] ^ gray[j]).count("1")
    return total / (L * q)


def qam_ber(order, ebn0_db):
    """Bit error rate of Gray square QAM on AWGN (both axes independent)."""
    L = int(round(math.sqrt(order)))
    es = 2 * (L * L - 1) / 3  # average symbol energy with unit-spaced-by-2 levels
    eb = es / math.log2(order)
    n0 = eb / 10 ** (ebn0_db / 10)
    return gray_pam_ber(L, math.sqrt(n0 / 2))


def random_pam(rng, shape, order=64):
    """Random PAM amplitudes from the per-axis alphabet of unit-energy QAM."""
    L = int(round(math.sqrt(order)))
    levels = np.arange(-(L - 1), L, 2) / math.sqrt(2 * (L * L - 1) / 3)
    return rng.choice(levels, size=shape)
