"""Burst tail shortening: hard truncation, raised-cosine windowing, and
virtual-symbol cancellation.

Virtual symbols are extra, non-data PAM symbols placed just outside the data
grid (slots ``N .. N+V-1`` after the burst, ``-V .. -1`` before it). Their
real amplitudes ``a`` minimize

    ||s̃ + G̃1 a||² + γ ||G̃2 a||²

where the G̃1 rows sample the virtual-symbol pulses beyond the burst
boundary, the G̃2 rows sample them inside it, and the tilde stacks real over
imaginary parts. The minimizer is ``a = -B s̃`` with
``B = (G̃1ᵀG̃1 + γ G̃2ᵀG̃2)⁻¹ G̃1ᵀ``, a data-independent matrix built once per
configuration.
"""

from __future__ import annotations

import hashlib
import logging
import os
import struct
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .errors import ConfigError, DesignMismatchError
from .prototype import PrototypeFilter
from .waveform import (
    BurstConfig,
    ComplexSignal,
    check_grid,
    quarter_phase,
    synthesize_many,
    synthesize_slots,
)

log = logging.getLogger(__name__)

EDGES = ("head", "tail")
METHODS = ("none", "hard", "windowed", "virtual", "virtual+truncate")

# Truncation -------------------------------------------------------------------


def _check_bounds(K_b, K_e):
    if K_b > K_e:
        raise ConfigError(f"inverted truncation bounds: K_b={K_b} > K_e={K_e}")


def hard_truncate(signal: ComplexSignal, K_b: int, K_e: int) -> ComplexSignal:
    """Zero every sample outside ``[K_b, K_e]``."""
    _check_bounds(K_b, K_e)
    k = signal.indices
    keep = (k >= K_b) & (k <= K_e)
    return ComplexSignal(np.where(keep, signal.samples, 0), signal.origin)


def raised_cosine_window(k, K_b: int, K_e: int, L_ro: int) -> np.ndarray:
    """Two-sided raised-cosine truncation window evaluated at indices ``k``.

    On the tail side ``w = 1/2 + 1/2 cos((k - K_b.ro) π / L_ro)`` over
    ``[K_e - L_ro, K_e]``, mirrored about the burst on the head side, one in
    between and zero outside ``[K_b, K_e]``. ``L_ro = 0`` gives a step.
    """
    _check_bounds(K_b, K_e)
    if L_ro < 0 or L_ro > K_e - K_b:
        raise ConfigError(f"roll-off length {L_ro} exceeds burst span {K_e - K_b}")
    k = np.asarray(k)
    w = ((k >= K_b) & (k <= K_e)).astype(float)
    if L_ro == 0:
        return w
    ro_tail = K_e - L_ro
    t = (k >= ro_tail) & (k <= K_e)
    w[t] = 0.5 + 0.5 * np.cos((k[t] - ro_tail) * np.pi / L_ro)
    ro_head = K_b + L_ro
    h = (k >= K_b) & (k <= ro_head)
    w[h] = np.minimum(w[h], 0.5 + 0.5 * np.cos((ro_head - k[h]) * np.pi / L_ro))
    return w


def windowed_truncate(signal: ComplexSignal, K_b: int, K_e: int, L_ro: int) -> ComplexSignal:
    w = raised_cosine_window(signal.indices, K_b, K_e, L_ro)
    return ComplexSignal(signal.samples * w, signal.origin)


# Design -----------------------------------------------------------------------


def virtual_slots(config: BurstConfig, edge: str) -> np.ndarray:
    if edge == "tail":
        return np.arange(config.N, config.N + config.V)
    if edge == "head":
        return np.arange(-config.V, 0)
    raise ConfigError(f"edge must be 'head' or 'tail', got {edge!r}")


def design_regions(config: BurstConfig, edge: str):
    """Sample indices of the suppressed region and of the in-burst region.

    Both are restricted to the support of the virtual-symbol pulses; beyond it
    the cancellation signal is identically zero.
    """
    slots = virtual_slots(config, edge)
    h = config.half
    lo = int(slots[0]) * h
    hi = int(slots[-1]) * h + config.eta * config.M
    if edge == "tail":
        outside = np.arange(config.K_e_burst + 1, hi + 1)
        inside = np.arange(lo, config.K_e_burst + 1)
    else:
        outside = np.arange(lo, config.K_b_burst)
        inside = np.arange(config.K_b_burst, hi + 1)
    if outside.size == 0:
        raise ConfigError(f"{edge} boundary leaves nothing to cancel")
    return outside, inside


def config_hash(filt: PrototypeFilter, config: BurstConfig, edge: str) -> str:
    """Identifier binding a design to its filter, waveform parameters and edge."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(filt.taps, dtype="<f8").tobytes())
    fields = (
        filt.M,
        filt.eta,
        config.M,
        config.active,
        config.N,
        config.eta,
        config.V,
        float(config.gamma).hex(),
        config.K_b_burst,
        config.K_e_burst,
        edge,
    )
    h.update(repr(fields).encode())
    return h.hexdigest()


def _basis_columns(filt, config, slots, k):
    # Complex pulse φ_j(k) for j = q_index*|Ω| + p_index (column-major vec(A)).
    M, h = config.M, config.half
    g = filt.taps
    active = np.asarray(config.active)
    carrier = np.exp(2j * np.pi * np.outer(k, active) / M)
    cols = []
    for q in slots:
        x = k - q * h
        pulse = np.where((x >= 0) & (x < g.size), g[np.clip(x, 0, g.size - 1)], 0.0)
        cols.append(pulse[:, None] * carrier * quarter_phase(active + q)[None, :])
    return np.concatenate(cols, axis=1)


@dataclass(frozen=True)
class DesignBasis:
    """Stacked real/imaginary basis matrices of one edge (γ-independent)."""

    G1: np.ndarray = field(repr=False)
    G2: np.ndarray = field(repr=False)
    outside: np.ndarray = field(repr=False)
    inside: np.ndarray = field(repr=False)
    slots: np.ndarray
    gram1: np.ndarray = field(repr=False)
    gram2: np.ndarray = field(repr=False)


_BASIS_CACHE: "OrderedDict[str, DesignBasis]" = OrderedDict()
_BASIS_CACHE_SIZE = 4


def design_basis(filt: PrototypeFilter, config: BurstConfig, edge: str) -> DesignBasis:
    """Build (or fetch from a small in-process cache) the G̃1/G̃2 matrices."""
    if filt.M != config.M or filt.eta != config.eta:
        raise ConfigError("filter (M, eta) does not match the burst configuration")
    key = config_hash(filt, config.with_gamma(0.0), edge)
    if key in _BASIS_CACHE:
        _BASIS_CACHE.move_to_end(key)
        return _BASIS_CACHE[key]
    slots = virtual_slots(config, edge)
    outside, inside = design_regions(config, edge)
    c1 = _basis_columns(filt, config, slots, outside)
    c2 = _basis_columns(filt, config, slots, inside)
    G1 = np.vstack([c1.real, c1.imag])
    G2 = np.vstack([c2.real, c2.imag])
    basis = DesignBasis(G1, G2, outside, inside, slots, G1.T @ G1, G2.T @ G2)
    _BASIS_CACHE[key] = basis
    if len(_BASIS_CACHE) > _BASIS_CACHE_SIZE:
        _BASIS_CACHE.popitem(last=False)
    return basis


@dataclass(frozen=True)
class CancellationDesign:
    """Precomputed solver ``B`` for one burst edge.

    ``B`` maps the stacked real/imaginary samples of the untreated burst over
    ``tail_indices`` to minus the virtual symbol vector.
    """

    B: np.ndarray = field(repr=False)
    edge: str
    slots: np.ndarray
    tail_indices: np.ndarray = field(repr=False)
    inband_indices: np.ndarray = field(repr=False)
    config_hash: str
    gamma: float
    condition_number: float
    pinv_fallback: bool
    residual: float
    filt: PrototypeFilter = field(repr=False)
    config: BurstConfig = field(repr=False)

    def __post_init__(self):
        # shared across workers; freeze the solver matrix
        B = np.array(self.B, dtype=float)
        B.setflags(write=False)
        object.__setattr__(self, "B", B)

    @property
    def n_symbols(self) -> int:
        return self.B.shape[0]

    @property
    def basis(self) -> DesignBasis:
        return design_basis(self.filt, self.config, self.edge)

    def stacked(self, signal: ComplexSignal) -> np.ndarray:
        s = signal.at(self.tail_indices)
        return np.concatenate([s.real, s.imag])

    def costs(self, s_tilde, a):
        """(ξ1, ξ2) for stacked burst samples and virtual symbol vectors.

        Accepts single vectors or column stacks.
        """
        b = self.basis
        r1 = s_tilde + b.G1 @ a
        r2 = b.G2 @ a
        return np.sum(r1 * r1, axis=0), np.sum(r2 * r2, axis=0)


def normal_residual(B, basis: DesignBasis, gamma: float) -> float:
    """``||(G̃1ᵀG̃1 + γG̃2ᵀG̃2) B - G̃1ᵀ|| / ||G̃1ᵀ||`` (Frobenius)."""
    lhs = (basis.gram1 + gamma * basis.gram2) @ B
    return float(np.linalg.norm(lhs - basis.G1.T) / np.linalg.norm(basis.G1))


def build_design(filt: PrototypeFilter, config: BurstConfig, edge: str = "tail") -> CancellationDesign:
    """Solve the regularized normal equations for one edge.

    A Cholesky solve is used; if the normal matrix is numerically singular
    (only possible for ``gamma == 0``) the minimum-norm least-squares solution
    ``pinv(G̃1)`` is returned instead and ``pinv_fallback`` is set.
    """
    gamma = float(config.gamma)
    basis = design_basis(filt, config, edge)
    A = basis.gram1 + gamma * basis.gram2
    ev = np.linalg.eigvalsh(A)
    cond = float(ev[-1] / ev[0]) if ev[0] > 0 else float("inf")
    rhs = basis.G1.T
    fallback = False
    try:
        factor = la.cho_factor(A, lower=False, check_finite=False)
        B = la.cho_solve(factor, rhs, check_finite=False)
        res = normal_residual(B, basis, gamma)
        if res > 1e-10:
            # one step of iterative refinement
            B = B + la.cho_solve(factor, rhs - A @ B, check_finite=False)
            res = normal_residual(B, basis, gamma)
        if not np.all(np.isfinite(B)):
            raise la.LinAlgError("non-finite solution")
    except la.LinAlgError:
        stacked = basis.G1 if gamma == 0 else np.vstack([basis.G1, np.sqrt(gamma) * basis.G2])
        B = np.linalg.pinv(stacked)[:, : basis.G1.shape[0]]
        res = normal_residual(B, basis, gamma)
        fallback = True
    log.debug(
        "%s design: %d symbols x %d samples, gamma=%g, cond=%.3g, residual=%.2e%s",
        edge, B.shape[0], B.shape[1], gamma, cond, res, " (pinv)" if fallback else "",
    )
    return CancellationDesign(
        B=B,
        edge=edge,
        slots=basis.slots,
        tail_indices=basis.outside,
        inband_indices=basis.inside,
        config_hash=config_hash(filt, config, edge),
        gamma=gamma,
        condition_number=cond,
        pinv_fallback=fallback,
        residual=res,
        filt=filt,
        config=config,
    )


_DESIGN_CACHE: "OrderedDict[str, CancellationDesign]" = OrderedDict()


def get_design(filt: PrototypeFilter, config: BurstConfig, edge: str) -> CancellationDesign:
    """Memoized :func:`build_design` (a handful of entries kept in memory)."""
    key = config_hash(filt, config, edge)
    if key not in _DESIGN_CACHE:
        _DESIGN_CACHE[key] = build_design(filt, config, edge)
        if len(_DESIGN_CACHE) > _BASIS_CACHE_SIZE:
            _DESIGN_CACHE.popitem(last=False)
    _DESIGN_CACHE.move_to_end(key)
    return _DESIGN_CACHE[key]


@dataclass(frozen=True)
class VirtualSymbolBlock:
    """Virtual symbol amplitudes ``A[p, q]``, shape ``(|Ω|, V)``."""

    values: np.ndarray
    slots: np.ndarray
    edge: str

    @property
    def vector(self) -> np.ndarray:
        """Column-major vectorization matching the rows of ``B``."""
        return self.values.T.reshape(-1)


def _check_design(design, filt=None, config=None):
    if filt is None and config is None:
        return
    filt = design.filt if filt is None else filt
    config = design.config if config is None else config
    if config_hash(filt, config, design.edge) != design.config_hash:
        raise DesignMismatchError(
            f"{design.edge} design {design.config_hash[:12]} was built for a different configuration"
        )


def apply_design(
    signal: ComplexSignal,
    design: CancellationDesign,
    filt: PrototypeFilter | None = None,
    config: BurstConfig | None = None,
):
    """Add the designed cancellation to a data-only burst.

    Returns the extended signal ``s + s_vs`` and the virtual symbol block.
    Passing ``filt``/``config`` verifies that they match the design.
    """
    _check_design(design, filt, config)
    a = -design.B @ design.stacked(signal)
    cfg = design.config
    values = a.reshape(cfg.V, cfg.n_active).T
    vs, origin = synthesize_slots(values, design.slots, cfg.active, design.filt)
    block = VirtualSymbolBlock(values, design.slots, design.edge)
    return signal + ComplexSignal(vs, origin), block


def cancellation_signal(block: VirtualSymbolBlock, filt: PrototypeFilter, config: BurstConfig) -> ComplexSignal:
    vs, origin = synthesize_slots(block.values, block.slots, config.active, filt)
    return ComplexSignal(vs, origin)


# End-to-end -------------------------------------------------------------------


def _designs_for(filt, config, designs):
    if designs is None:
        return get_design(filt, config, "head"), get_design(filt, config, "tail")
    head, tail = designs
    _check_design(head, filt, config)
    _check_design(tail, filt, config)
    return head, tail


def check_uncoupled(config: BurstConfig) -> None:
    """Head and tail designs are solved independently; refuse bursts where
    one edge's virtual symbols reach into the other edge's regions."""
    head_end = -config.half + config.eta * config.M
    if head_end >= config.N * config.half:
        raise ConfigError(
            f"N={config.N} too short for independent head/tail designs (need N >= 2*eta)"
        )


@dataclass(frozen=True)
class ShortenedBatch:
    """Shortened bursts sharing one time origin.

    ``virtual`` holds the summed cancellation signals (head + tail) on the
    same span, or ``None`` for methods without virtual symbols.
    """

    samples: np.ndarray
    origin: int
    virtual: np.ndarray | None = None

    def signal(self, i: int = 0) -> ComplexSignal:
        return ComplexSignal(self.samples[i], self.origin)


def virtual_span(config: BurstConfig) -> tuple[int, int]:
    """First and last sample index touched by data plus virtual symbols."""
    return -config.V * config.half, (config.N + config.V - 1) * config.half + config.eta * config.M


def shorten_many(
    grids,
    filt: PrototypeFilter,
    config: BurstConfig,
    method: str,
    *,
    designs=None,
    L_ro: int | None = None,
    data: np.ndarray | None = None,
) -> ShortenedBatch:
    """Vectorized :func:`shorten` over a stack of grids ``(B, |Ω|, N)``.

    ``data`` may pass in already synthesized bursts (origin 0) to avoid
    recomputation across methods.
    """
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    grids = check_grid(grids, config)
    s = synthesize_many(grids, filt, config) if data is None else np.asarray(data)
    K_b, K_e = config.K_b_burst, config.K_e_burst
    k = np.arange(s.shape[-1])
    if method == "none":
        return ShortenedBatch(s, 0)
    if method == "hard":
        return ShortenedBatch(s * raised_cosine_window(k, K_b, K_e, 0), 0)
    if method == "windowed":
        L_ro = config.M // 4 if L_ro is None else int(L_ro)
        return ShortenedBatch(s * raised_cosine_window(k, K_b, K_e, L_ro), 0)

    check_uncoupled(config)
    head, tail = _designs_for(filt, config, designs)
    lo, hi = virtual_span(config)
    out = np.zeros(s.shape[:-1] + (hi - lo + 1,), dtype=complex)
    out[..., -lo : -lo + s.shape[-1]] = s
    vs_total = np.zeros_like(out)
    for d in (head, tail):
        idx = d.tail_indices
        valid = (idx >= 0) & (idx < s.shape[-1])
        seg = np.zeros(s.shape[:-1] + (idx.size,), dtype=complex)
        seg[..., valid] = s[..., idx[valid]]
        s_tilde = np.concatenate([seg.real, seg.imag], axis=-1)
        a = -(s_tilde @ d.B.T)
        values = np.swapaxes(a.reshape(a.shape[:-1] + (config.V, config.n_active)), -1, -2)
        vs, origin = synthesize_slots(values, d.slots, config.active, filt)
        vs_total[..., origin - lo : origin - lo + vs.shape[-1]] += vs
    out += vs_total
    if method == "virtual+truncate":
        out = out * raised_cosine_window(np.arange(lo, hi + 1), K_b, K_e, 0)
    return ShortenedBatch(out, lo, vs_total)


def shorten(
    grid,
    filt: PrototypeFilter,
    config: BurstConfig,
    method: str = "virtual",
    *,
    designs=None,
    L_ro: int | None = None,
) -> ComplexSignal:
    """Synthesize one burst and shorten its tails.

    Methods: ``none``, ``hard``, ``windowed`` (raised cosine, ``L_ro``
    defaults to ``M/4``), ``virtual`` (cancellation, residual kept) and
    ``virtual+truncate`` (cancellation, residual zeroed outside
    ``[K_b_burst, K_e_burst]``).
    """
    grid = check_grid(grid, config)
    if grid.ndim != 2:
        raise ConfigError("shorten expects one grid; use shorten_many")
    batch = shorten_many(grid[None], filt, config, method, designs=designs, L_ro=L_ro)
    return batch.signal(0)


# Design cache file --------------------------------------------------------------

MAGIC = b"FBMCVSD\x00"
VERSION = 1
_HEADER = struct.Struct("<8sHBBIIqIqIdd32s")


def design_filename(design: CancellationDesign) -> str:
    return f"design-{design.edge}-{design.config_hash[:16]}.bin"


def save_design(design: CancellationDesign, path: str | os.PathLike) -> None:
    """Write ``B`` as little-endian float64 behind a fixed binary header.

    Header: magic, version, edge (0 head / 1 tail), flags (bit 0: pinv
    fallback), rows, cols, first/count of the suppressed range, first/count
    of the in-burst range, condition number, gamma, SHA-256 config digest.
    """
    B = np.ascontiguousarray(design.B, dtype="<f8")
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        EDGES.index(design.edge),
        int(design.pinv_fallback),
        B.shape[0],
        B.shape[1],
        int(design.tail_indices[0]),
        design.tail_indices.size,
        int(design.inband_indices[0]) if design.inband_indices.size else 0,
        design.inband_indices.size,
        design.condition_number,
        design.gamma,
        bytes.fromhex(design.config_hash),
    )
    tmp = os.fspath(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(B.tobytes())
    os.replace(tmp, path)


def load_design(
    path: str | os.PathLike, filt: PrototypeFilter, config: BurstConfig, edge: str
) -> CancellationDesign:
    """Read a cache file, refusing it unless the header digest matches."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise DesignMismatchError(f"{path}: truncated design file")
    (magic, version, edge_id, flags, rows, cols, t0, tn, i0, inn, cond, gamma, digest) = (
        _HEADER.unpack_from(raw)
    )
    if magic != MAGIC or version != VERSION:
        raise DesignMismatchError(f"{path}: not a version-{VERSION} design file")
    expected = config_hash(filt, config, edge)
    if digest.hex() != expected or EDGES[edge_id] != edge:
        raise DesignMismatchError(f"{path}: design was built for a different configuration")
    body = raw[_HEADER.size :]
    if len(body) != rows * cols * 8:
        raise DesignMismatchError(f"{path}: payload size mismatch")
    B = np.frombuffer(body, dtype="<f8").reshape(rows, cols).astype(float)
    return CancellationDesign(
        B=B,
        edge=edge,
        slots=virtual_slots(config, edge),
        tail_indices=np.arange(t0, t0 + tn),
        inband_indices=np.arange(i0, i0 + inn),
        config_hash=expected,
        gamma=gamma,
        condition_number=cond,
        pinv_fallback=bool(flags & 1),
        # not re-verified on load; call normal_residual(B, design.basis, gamma)
        residual=float("nan"),
        filt=filt,
        config=config,
    )
