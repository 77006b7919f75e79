"""Monte-Carlo link simulation over AWGN with back-to-back packets.

Packet ``i`` of a train has its own time axis shifted by ``i * spacing``
samples. The receiver is given the true burst boundaries, keeps only
``[K_b, K_e]`` of the target packet, pads zeros and runs the matched-filter
demodulator.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import qam
from .errors import ConfigError
from .metrics import ber_confidence, ber_count
from .prototype import PrototypeFilter
from .tailshort import ShortenedBatch, shorten_many, virtual_span
from .waveform import BurstConfig, ComplexSignal, demodulate_slots, pam_to_qam, qam_to_pam

log = logging.getLogger(__name__)

POLICIES = ("truncate-residual", "overlap-residual")


@dataclass(frozen=True)
class PacketTrain:
    """Packets sent back to back.

    ``grids`` is ``(P, |Ω|, N)``; ``bits`` holds the payload bits of each
    packet (``(P, n_bits)``) or ``None`` for symbol-only trains.
    """

    grids: np.ndarray = field(repr=False)
    spacing: int
    overlap_policy: str = "overlap-residual"
    bits: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.spacing < 1:
            raise ConfigError("packet spacing must be at least one sample")
        if self.overlap_policy not in POLICIES:
            raise ConfigError(f"overlap policy must be one of {POLICIES}")

    def __len__(self):
        return len(self.grids)


@dataclass(frozen=True)
class ChannelSpec:
    kind: str = "awgn"
    ebn0_db: float = math.inf
    seed: int = 0


def no_guard_spacing(config: BurstConfig) -> int:
    """Start-to-start distance that puts each packet right after the previous
    packet's end boundary."""
    return config.kept_length


def packet_bursts(train: PacketTrain, method: str, filt, config, designs=None, L_ro=None) -> ShortenedBatch:
    batch = shorten_many(train.grids, filt, config, method, designs=designs, L_ro=L_ro)
    if train.overlap_policy == "truncate-residual":
        k = np.arange(batch.origin, batch.origin + batch.samples.shape[-1])
        keep = (k >= config.K_b_burst) & (k <= config.K_e_burst)
        batch = ShortenedBatch(batch.samples * keep, batch.origin, batch.virtual)
    return batch


def place(bursts: np.ndarray, origin: int, spacing: int) -> ComplexSignal:
    """Sum bursts ``(P, L)`` sharing a local ``origin`` at offsets ``i * spacing``."""
    P, L = bursts.shape
    if P == 0:
        return ComplexSignal(np.zeros(0, dtype=complex), 0)
    out = np.zeros((P - 1) * spacing + L, dtype=complex)
    for i in range(P):
        out[i * spacing : i * spacing + L] += bursts[i]
    return ComplexSignal(out, origin)


def burst_stream(batch: ShortenedBatch, config: BurstConfig, gap: int = 0) -> ComplexSignal:
    """Concatenate bursts for spectral estimation.

    Every burst is first laid on the common span of data plus virtual
    symbols, so streams built from different methods share sample alignment
    and only differ in content.
    """
    lo, hi = virtual_span(config)
    P, L = batch.samples.shape
    if batch.origin < lo or batch.origin + L - 1 > hi:
        raise ConfigError("burst exceeds the virtual-symbol span")
    full = np.zeros((P, hi - lo + 1), dtype=complex)
    full[:, batch.origin - lo : batch.origin - lo + L] = batch.samples
    return place(full, lo, hi - lo + 1 + gap)


def emit_train(train: PacketTrain, method: str, filt: PrototypeFilter, config: BurstConfig,
               designs=None, L_ro=None) -> ComplexSignal:
    """Shorten every packet and sum them into one continuous stream."""
    if train.overlap_policy == "truncate-residual" and train.spacing < config.kept_length:
        raise ConfigError(
            f"spacing {train.spacing} < burst extent {config.kept_length} under truncate-residual"
        )
    batch = packet_bursts(train, method, filt, config, designs, L_ro)
    return place(batch.samples, batch.origin, train.spacing)


def noise_density(energy: float, n_bits: int, ebn0_db: float) -> float:
    """N0 from measured transmit energy and Eb/N0; also the complex noise
    variance per sample."""
    if n_bits <= 0:
        raise ConfigError("no transmitted bits")
    if math.isinf(ebn0_db) and ebn0_db > 0:
        return 0.0
    return (energy / n_bits) / 10.0 ** (ebn0_db / 10.0)


def complex_noise(rng: np.random.Generator, shape) -> np.ndarray:
    """Unit-variance circularly symmetric complex Gaussian samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def awgn(signal: ComplexSignal, ebn0_db: float, bits_per_symbol: int, n_symbols: int,
         seed: int | np.random.Generator = 0) -> ComplexSignal:
    """Add noise with ``N0 = (Σ|s|² / n_bits) / (Eb/N0)`` per complex sample.

    ``n_bits = bits_per_symbol * n_symbols`` is the payload carried by the
    signal. ``ebn0_db = +inf`` returns the signal unchanged.
    """
    if math.isinf(ebn0_db) and ebn0_db > 0:
        return signal
    n0 = noise_density(signal.energy(), bits_per_symbol * n_symbols, ebn0_db)
    rng = np.random.default_rng(seed)
    noise = complex_noise(rng, signal.samples.shape) * math.sqrt(n0)
    return ComplexSignal(signal.samples + noise, signal.origin)


def receive_window(samples, origin: int, K_b: int, K_e: int, filt, config: BurstConfig) -> np.ndarray:
    """Zero outside ``[K_b, K_e]``, pad ``eta*M`` zeros per side, demodulate.

    ``samples`` carries the packet on its own time axis (origin relative to
    the packet start); a leading batch axis is allowed.
    """
    samples = np.asarray(samples, dtype=complex)
    n = samples.shape[-1]
    if K_b > K_e:
        raise ConfigError("inverted receive window")
    if K_b < origin or K_e >= origin + n:
        raise ConfigError(f"window [{K_b}, {K_e}] outside stream [{origin}, {origin + n - 1}]")
    cut = samples[..., K_b - origin : K_e - origin + 1]
    pad = config.eta * config.M
    widths = [(0, 0)] * (cut.ndim - 1) + [(pad, pad)]
    padded = np.pad(cut, widths)
    return demodulate_slots(padded, K_b - pad, np.arange(config.N), config.active, filt)


def receive_packet(stream: ComplexSignal, K_b: int, K_e: int, filt: PrototypeFilter,
                   config: BurstConfig, start: int = 0) -> np.ndarray:
    """Demodulate the packet whose time axis begins at stream index ``start``."""
    if len(stream) == 0:
        return np.zeros((config.n_active, config.N))
    return receive_window(stream.samples, stream.origin - start, K_b, K_e, filt, config)


# BER experiment -------------------------------------------------------------------


@dataclass(frozen=True)
class BerScenario:
    """Settings of one BER-vs-Eb/N0 run.

    Every packet owns a random stream (spawned from ``seed`` by packet index)
    providing its bits and a unit-variance noise record on its own time axis.
    All compared configurations reuse those records, scaled per Eb/N0, so
    differences between curves come from inter-packet interference only.
    """

    config: BurstConfig
    filt: PrototypeFilter
    ebn0_db: tuple[float, ...]
    gammas: tuple[float, ...] = (0.1,)
    packets: int = 240
    order: int = 64
    seed: int = 2016
    threads: int = 1
    chunk: int = 48


@dataclass(frozen=True)
class BerRow:
    scenario: str
    gamma: float
    ebn0_db: float
    errors: int
    bits: int
    ber: float
    ci_low: float
    ci_high: float


def _packet_draws(sc: BerScenario, lo: int, hi: int):
    cfg = sc.config
    nbits = cfg.n_active * (cfg.N // 2) * qam.bits_per_symbol(sc.order)
    span = virtual_span(cfg)
    length = span[1] - span[0] + 1
    children = np.random.SeedSequence(sc.seed).spawn(sc.packets)
    bits, noise = [], []
    for i in range(lo, hi):
        rng = np.random.default_rng(children[i])
        b = qam.random_bits(rng, nbits)
        bits.append(b)
        noise.append(complex_noise(rng, length))
    return np.array(bits), np.array(noise), span[0]


def _grids_from_bits(bits, sc: BerScenario):
    cfg = sc.config
    sym = qam.modulate(bits, sc.order).reshape(len(bits), cfg.n_active, cfg.N // 2)
    return qam_to_pam(sym)


def _detect(grids_hat, sc: BerScenario):
    sym = pam_to_qam(grids_hat).reshape(len(grids_hat), -1)
    return qam.demodulate(sym, sc.order)


def _scenario_list(sc: BerScenario):
    out = [("isolated", math.nan, "none"), ("overlap-none", math.nan, "none")]
    out += [("overlap-virtual", float(g), "virtual") for g in sc.gammas]
    return out


def _chunk_energies(sc, bits, designs_by_gamma):
    # Summed per-packet transmit energy per scenario for one chunk. Cross
    # terms between overlapping packets are zero-mean and left out, which
    # keeps the calibration independent of how packets are chunked.
    cfg, filt = sc.config, sc.filt
    grids = _grids_from_bits(bits, sc)
    data = shorten_many(grids, filt, cfg, "none")
    res = {"isolated": np.sum(np.abs(data.samples) ** 2, axis=-1)}
    res["overlap-none"] = res["isolated"]
    for g, designs in designs_by_gamma.items():
        c = cfg.with_gamma(g)
        b = shorten_many(grids, filt, c, "virtual", designs=designs, data=data.samples)
        res[("overlap-virtual", g)] = np.sum(np.abs(b.samples) ** 2, axis=-1)
    return res


def run_ber_experiment(sc: BerScenario) -> list[BerRow]:
    """BER of isolated packets, back-to-back untreated packets, and back-to-back
    packets with virtual-symbol shortening (residual tails kept) per gamma.

    Overlapped packets are received over ``[K_b, K_e]``; isolated ones over
    their whole support.
    """
    from .tailshort import get_design

    if sc.packets < 1:
        raise ConfigError("BER experiment needs at least one packet")
    if not sc.ebn0_db:
        raise ConfigError("empty Eb/N0 grid")
    cfg, filt = sc.config, sc.filt
    designs_by_gamma = {}
    for g in sc.gammas:
        c = cfg.with_gamma(g)
        designs_by_gamma[float(g)] = (get_design(filt, c, "head"), get_design(filt, c, "tail"))
    spacing = no_guard_spacing(cfg)
    K_b, K_e = cfg.K_b_burst, cfg.K_e_burst
    nbits_pkt = cfg.n_active * (cfg.N // 2) * qam.bits_per_symbol(sc.order)
    total_bits = nbits_pkt * sc.packets
    chunks = [(lo, min(lo + sc.chunk, sc.packets)) for lo in range(0, sc.packets, sc.chunk)]

    # Pass 1: transmit energy per scenario (N0 calibration needs the totals).
    def energy_job(bounds):
        bits, _, _ = _packet_draws(sc, *bounds)
        return _chunk_energies(sc, bits, designs_by_gamma)

    with ThreadPoolExecutor(max_workers=max(1, sc.threads)) as pool:
        partial = list(pool.map(energy_job, chunks))
    # summing one flat per-packet vector makes the total chunking-independent
    energy = {key: float(np.sum(np.concatenate([p[key] for p in partial]))) for key in partial[0]}
    span = virtual_span(cfg)
    margin = -(-(span[1] - span[0] + 1 + K_e - K_b + 1) // spacing)

    def errors_job(bounds):
        lo, hi = bounds
        bits, noise, noise_origin = _packet_draws(sc, lo, hi)
        grids = _grids_from_bits(bits, sc)
        n_pkt = hi - lo
        data = shorten_many(grids, filt, cfg, "none")
        L = data.samples.shape[-1]
        # Each packet's noise record, on its own axis from noise_origin.
        iso_noise = noise[:, -noise_origin : -noise_origin + L]
        win_noise = noise[:, K_b - noise_origin : K_e - noise_origin + 1]
        streams = {"overlap-none": data}
        for g, designs in designs_by_gamma.items():
            streams[("overlap-virtual", g)] = shorten_many(
                grids, filt, cfg.with_gamma(g), "virtual", designs=designs, data=data.samples
            )
        counts = {}
        # Interference seen in packet windows from the neighbors at +/- spacing,
        # including neighbors outside this chunk.
        ext_bits_lo, ext_bits_hi = max(lo - margin, 0), min(hi + margin, sc.packets)
        ext_bits, _, _ = _packet_draws(sc, ext_bits_lo, ext_bits_hi)
        ext_grids = _grids_from_bits(ext_bits, sc)
        ext_data = shorten_many(ext_grids, filt, cfg, "none")
        ext = {"overlap-none": ext_data}
        for g, designs in designs_by_gamma.items():
            ext[("overlap-virtual", g)] = shorten_many(
                ext_grids, filt, cfg.with_gamma(g), "virtual", designs=designs, data=ext_data.samples
            )
        for ebn0 in sc.ebn0_db:
            # isolated baseline: full support, no neighbors
            sigma = math.sqrt(noise_density(energy["isolated"], total_bits, ebn0))
            rx = data.samples + sigma * iso_noise
            hat = demodulate_slots(rx, 0, np.arange(cfg.N), cfg.active, filt)
            e, n, _ = ber_count(bits, _detect(hat, sc))
            counts[("isolated", math.nan, ebn0)] = (e, n)
            for key, batch in ext.items():
                sigma = math.sqrt(noise_density(energy[key], total_bits, ebn0))
                window = _windows_with_neighbors(batch, lo - ext_bits_lo, n_pkt, spacing, K_b, K_e)
                rx = window + sigma * win_noise
                hat = receive_window(rx, K_b, K_b, K_e, filt, cfg)
                e, n, _ = ber_count(bits, _detect(hat, sc))
                name, g = (key, math.nan) if isinstance(key, str) else key
                counts[(name, g, ebn0)] = (e, n)
        return counts

    with ThreadPoolExecutor(max_workers=max(1, sc.threads)) as pool:
        parts = list(pool.map(errors_job, chunks))
    rows = []
    for name, g, _ in _scenario_list(sc):
        for ebn0 in sc.ebn0_db:
            e = sum(p[(name, g, ebn0)][0] for p in parts)
            n = sum(p[(name, g, ebn0)][1] for p in parts)
            lo_ci, hi_ci = ber_confidence(e, n)
            rows.append(BerRow(name, g, float(ebn0), e, n, e / n, lo_ci, hi_ci))
            log.info("%-16s gamma=%-6g Eb/N0=%5.1f dB  BER=%.3e (%d/%d)", name, g, ebn0, e / n, e, n)
    return rows


def _windows_with_neighbors(batch: ShortenedBatch, first: int, count: int, spacing: int,
                            K_b: int, K_e: int) -> np.ndarray:
    """Samples ``[K_b, K_e]`` (packet axis) of packets ``first .. first+count-1``
    of ``batch`` after summing every packet of the batch at ``i * spacing``."""
    samples, origin = batch.samples, batch.origin
    P, L = samples.shape
    width = K_e - K_b + 1
    out = np.zeros((count, width), dtype=complex)
    reach = -(-(L + width) // spacing)
    for j in range(count):
        i = first + j
        for d in range(-reach, reach + 1):
            src = i + d
            if not 0 <= src < P:
                continue
            # neighbor's local index of this window: k - d*spacing
            lo_local = K_b - d * spacing - origin
            a, b = max(lo_local, 0), min(lo_local + width, L)
            if a < b:
                out[j, a - lo_local : b - lo_local] += samples[src, a:b]
    return out
