"""Command-line entry point: ``fbmcvs <subcommand> [--config FILE] [--out DIR]``.

Each subcommand writes one or more CSV files with a fixed header. Floats are
written with ``repr`` so reruns with the same seed are byte-identical.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import metrics, qam, sim
from .config import Scenario, load_scenario
from .errors import ConfigError, DesignMismatchError, NumericalError
from .prototype import orthogonality_report
from .tailshort import (
    EDGES,
    build_design,
    config_hash,
    design_filename,
    load_design,
    save_design,
    shorten_many,
)
from .waveform import demodulate_slots, qam_to_pam

log = logging.getLogger("fbmcvs")

METHOD_COLUMNS = ("none", "hard", "windowed", "virtual", "virtual+truncate")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3


# helpers ----------------------------------------------------------------------


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows) -> None:
    tmp = os.fspath(path) + ".tmp"
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    os.replace(tmp, path)
    log.info("wrote %s", path)


def pool_map(fn, items, threads: int):
    """Ordered map; results come back in input order whatever ``threads`` is."""
    items = list(items)
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def cached_design(filt, config, edge: str, cache_dir: str):
    """Load a design from ``cache_dir`` or build and store it."""
    digest = config_hash(filt, config, edge)
    path = os.path.join(cache_dir, f"design-{edge}-{digest[:16]}.bin")
    if os.path.exists(path):
        try:
            design = load_design(path, filt, config, edge)
            log.info("cache hit: %s", path)
            return design, True
        except DesignMismatchError as exc:
            log.warning("ignoring stale cache file (%s)", exc)
    t0 = time.perf_counter()
    design = build_design(filt, config, edge)
    log.info("built %s design in %.2f s", edge, time.perf_counter() - t0)
    if not design.residual < 1e-9:
        raise NumericalError(f"{edge} design residual {design.residual:.2e} exceeds 1e-9")
    os.makedirs(cache_dir, exist_ok=True)
    save_design(design, os.path.join(cache_dir, design_filename(design)))
    return design, False


def designs_for(sc: Scenario, filt, gamma: float):
    cfg = sc.burst_config(gamma)
    return tuple(cached_design(filt, cfg, edge, sc.cache_dir)[0] for edge in EDGES)


def burst_chunks(sc: Scenario, total: int, stream: int):
    """``(lo, hi, seed)`` triples covering ``total`` bursts.

    Each chunk draws from its own child of ``SeedSequence([seed, stream])``,
    so output depends on the chunk size but not on thread count.
    """
    size = sc.experiment.chunk
    bounds = [(lo, min(lo + size, total)) for lo in range(0, total, size)]
    children = np.random.SeedSequence([sc.experiment.seed, stream]).spawn(len(bounds))
    return [(lo, hi, child) for (lo, hi), child in zip(bounds, children)]


def random_grids(seed, count: int, config, order: int):
    rng = np.random.default_rng(seed)
    nbits = config.n_active * (config.N // 2) * qam.bits_per_symbol(order)
    bits = qam.random_bits(rng, (count, nbits))
    sym = qam.modulate(bits, order).reshape(count, config.n_active, config.N // 2)
    return bits, qam_to_pam(sym)


def receive_full(batch, config, filt):
    """Matched-filter demodulation over the batch's whole support."""
    return demodulate_slots(batch.samples, batch.origin, np.arange(config.N), config.active, filt)


def receive_kept(batch, config, filt):
    return sim.receive_window(batch.samples, batch.origin, config.K_b_burst, config.K_e_burst, filt, config)


# subcommands ------------------------------------------------------------------


def cmd_design(sc: Scenario, out: str, threads: int) -> None:
    filt = sc.prototype()
    cfg = sc.burst_config()
    rows = []
    for edge in EDGES:
        design, hit = cached_design(filt, cfg, edge, sc.cache_dir)
        rows.append(
            (edge, design.B.shape[0], design.B.shape[1], design.gamma, design.condition_number,
             design.pinv_fallback, design.config_hash)
        )
        print(
            f"{edge}: B {design.B.shape[0]}x{design.B.shape[1]}  cond={design.condition_number:.4g}"
            f"  {'cache hit' if hit else 'built'}  {design_filename(design)}"
        )
    write_csv(
        os.path.join(out, "design.csv"),
        ("edge", "rows", "cols", "gamma", "condition_number", "pinv_fallback", "config_hash"),
        rows,
    )


def sweep_gamma_rows(sc: Scenario, threads: int = 1):
    """``(gamma, xi1_dbc, xi2_dbc)`` rows; the first row (gamma=inf) is the
    untreated burst."""
    filt = sc.prototype()
    base = sc.burst_config()
    gammas = [float(g) for g in sc.experiment.gammas]
    designs = {g: designs_for(sc, filt, g) for g in gammas}
    K_b, K_e = base.K_b_burst, base.K_e_burst

    def job(chunk):
        lo, hi, seed = chunk
        _, grids = random_grids(seed, hi - lo, base, sc.experiment.order)
        data = shorten_many(grids, filt, base, "none")
        ref = np.sum(np.abs(data.samples) ** 2, axis=-1) / base.N
        res = {math.inf: (metrics.batch_outside_energy(data.samples, 0, K_b, K_e), np.zeros(hi - lo))}
        for g in gammas:
            b = shorten_many(grids, filt, base.with_gamma(g), "virtual", designs=designs[g], data=data.samples)
            xi1 = metrics.batch_outside_energy(b.samples, b.origin, K_b, K_e)
            xi2 = metrics.batch_inside_energy(b.virtual, b.origin, K_b, K_e)
            res[g] = (xi1, xi2)
        return ref, res

    parts = pool_map(job, burst_chunks(sc, sc.experiment.bursts, 1), threads)
    ref = np.concatenate([p[0] for p in parts])
    rows = []
    for g in [math.inf] + gammas:
        xi1 = np.concatenate([p[1][g][0] for p in parts])
        xi2 = np.concatenate([p[1][g][1] for p in parts])
        rep = metrics.energy_report(xi1, xi2, ref)
        rows.append((g, rep.xi1_dbc, rep.xi2_dbc))
    return rows


def cmd_sweep_gamma(sc: Scenario, out: str, threads: int) -> None:
    rows = sweep_gamma_rows(sc, threads)
    for g, x1, x2 in rows:
        log.info("gamma=%-8g xi1=%7.2f dBc  xi2=%7.2f dBc", g, x1, x2)
    write_csv(os.path.join(out, "sweep_gamma.csv"), ("gamma", "xi1_dbc", "xi2_dbc"), rows)


def evm_rows(sc: Scenario, threads: int = 1):
    """Edge EVM (dB) per gamma and method, noise-free.

    ``none`` and ``virtual`` are demodulated over their whole support; the
    truncating methods over ``[K_b_burst, K_e_burst]``.
    """
    filt = sc.prototype()
    base = sc.burst_config()
    gammas = [float(g) for g in sc.experiment.evm_gammas]
    designs = {g: designs_for(sc, filt, g) for g in gammas}
    depth = sc.experiment.edge_depth

    def job(chunk):
        lo, hi, seed = chunk
        _, grids = random_grids(seed, hi - lo, base, sc.experiment.order)
        data = shorten_many(grids, filt, base, "none")
        est = {"none": receive_full(data, base, filt)}
        est["hard"] = receive_kept(shorten_many(grids, filt, base, "hard", data=data.samples), base, filt)
        est["windowed"] = receive_kept(
            shorten_many(grids, filt, base, "windowed", L_ro=sc.L_ro, data=data.samples), base, filt
        )
        for g in gammas:
            c = base.with_gamma(g)
            v = shorten_many(grids, filt, c, "virtual", designs=designs[g], data=data.samples)
            vt = shorten_many(grids, filt, c, "virtual+truncate", designs=designs[g], data=data.samples)
            est[("virtual", g)] = receive_full(v, base, filt)
            est[("virtual+truncate", g)] = receive_kept(vt, base, filt)
        return grids, est

    parts = pool_map(job, burst_chunks(sc, sc.experiment.bursts, 2), threads)
    grids = np.concatenate([p[0] for p in parts])

    def evm(key):
        return metrics.edge_evm(grids, np.concatenate([p[1][key] for p in parts]), depth)

    fixed = {m: evm(m) for m in ("none", "hard", "windowed")}
    return [
        (g, fixed["none"], fixed["hard"], fixed["windowed"], evm(("virtual", g)), evm(("virtual+truncate", g)))
        for g in gammas
    ]


def cmd_evm(sc: Scenario, out: str, threads: int) -> None:
    rows = evm_rows(sc, threads)
    write_csv(os.path.join(out, "evm.csv"), ("gamma",) + METHOD_COLUMNS, rows)


def papr_values(sc: Scenario, threads: int = 1) -> dict:
    """Per-burst PAPR over ``[K_b_burst, K_e_burst]`` for every method."""
    filt = sc.prototype()
    base = sc.burst_config()
    cfg = base.with_gamma(sc.papr.gamma)
    designs = designs_for(sc, filt, sc.papr.gamma)
    K_b, K_e = base.K_b_burst, base.K_e_burst

    def job(chunk):
        lo, hi, seed = chunk
        _, grids = random_grids(seed, hi - lo, base, sc.experiment.order)
        data = shorten_many(grids, filt, base, "none")
        res = {}
        for m in METHOD_COLUMNS:
            b = shorten_many(grids, filt, cfg, m, designs=designs, L_ro=sc.L_ro, data=data.samples)
            res[m] = metrics.batch_papr_db(b.samples, b.origin, K_b, K_e)
        return res

    parts = pool_map(job, burst_chunks(sc, sc.papr.bursts, 3), threads)
    return {m: np.concatenate([p[m] for p in parts]) for m in METHOD_COLUMNS}


def papr_thresholds(sc: Scenario) -> np.ndarray:
    p = sc.papr
    n = int(round((p.threshold_max - p.threshold_min) / p.threshold_step)) + 1
    return p.threshold_min + p.threshold_step * np.arange(n)


def cmd_papr(sc: Scenario, out: str, threads: int) -> None:
    values = papr_values(sc, threads)
    t = papr_thresholds(sc)
    ccdf = {m: metrics.papr_ccdf(values[m], t) for m in METHOD_COLUMNS}
    rows = [(t[i],) + tuple(ccdf[m][i] for m in METHOD_COLUMNS) for i in range(t.size)]
    write_csv(os.path.join(out, "papr.csv"), ("threshold_db",) + METHOD_COLUMNS, rows)
    summary = [
        (m, sc.papr.probability, metrics.papr_at_ccdf(values[m], sc.papr.probability), values[m].size)
        for m in METHOD_COLUMNS
    ]
    for m, p, v, n in summary:
        log.info("%-16s PAPR at CCDF %g: %.3f dB (%d bursts)", m, p, v, n)
    write_csv(os.path.join(out, "papr_summary.csv"), ("method", "ccdf", "papr_db", "bursts"), summary)


def psd_estimates(sc: Scenario, threads: int = 1) -> dict:
    """Welch PSD per method from one shared random burst ensemble."""
    filt = sc.prototype()
    base = sc.burst_config()
    cfg = base.with_gamma(sc.psd.gamma)
    designs = designs_for(sc, filt, sc.psd.gamma)
    p = sc.psd
    fft_size = 4 * base.M if p.fft_size is None else p.fft_size

    def job(chunk):
        lo, hi, seed = chunk
        _, grids = random_grids(seed, hi - lo, base, sc.experiment.order)
        data = shorten_many(grids, filt, base, "none")
        res = {}
        for m in METHOD_COLUMNS:
            b = shorten_many(grids, filt, cfg, m, designs=designs, L_ro=sc.L_ro, data=data.samples)
            stream = sim.burst_stream(b, base, p.gap)
            res[m] = metrics.psd_welch(stream, base.M, base.active, fft_size, p.segment, p.overlap)
        return res

    parts = pool_map(job, burst_chunks(sc, p.bursts, 4), threads)
    return {m: metrics.merge_psd([q[m] for q in parts]) for m in METHOD_COLUMNS}


def cmd_psd(sc: Scenario, out: str, threads: int) -> None:
    est = psd_estimates(sc, threads)
    freqs = est["none"].frequencies
    db = {m: est[m].power_db for m in METHOD_COLUMNS}
    rows = [(freqs[i],) + tuple(db[m][i] for m in METHOD_COLUMNS) for i in range(freqs.size)]
    write_csv(os.path.join(out, "psd.csv"), ("subcarrier",) + METHOD_COLUMNS, rows)
    first = max(sc.burst_config().active) + 1
    for m in METHOD_COLUMNS:
        log.info("%-16s PSD at subcarrier %d: %.2f dB", m, first, est[m].at(first))


def cmd_ber(sc: Scenario, out: str, threads: int) -> None:
    scenario = sim.BerScenario(
        config=sc.burst_config(),
        filt=sc.prototype(),
        ebn0_db=tuple(float(x) for x in sc.ber.ebn0_db),
        gammas=tuple(float(g) for g in sc.ber.gammas),
        packets=sc.ber.packets,
        order=sc.experiment.order,
        seed=sc.experiment.seed,
        threads=threads,
        chunk=sc.ber.chunk,
    )
    rows = sim.run_ber_experiment(scenario)
    write_csv(
        os.path.join(out, "ber.csv"),
        ("scenario", "gamma", "ebn0_db", "errors", "bits", "ber", "ci_low", "ci_high"),
        [(r.scenario, r.gamma, r.ebn0_db, r.errors, r.bits, r.ber, r.ci_low, r.ci_high) for r in rows],
    )


def cmd_roundtrip(sc: Scenario, out: str, threads: int) -> None:
    filt = sc.prototype()
    cfg = sc.burst_config()

    def job(chunk):
        lo, hi, seed = chunk
        _, grids = random_grids(seed, hi - lo, cfg, sc.experiment.order)
        return grids, receive_full(shorten_many(grids, filt, cfg, "none"), cfg, filt)

    parts = pool_map(job, burst_chunks(sc, sc.experiment.bursts, 5), threads)
    grids = np.concatenate([p[0] for p in parts])
    est = np.concatenate([p[1] for p in parts])
    rows = [
        ("evm_db", metrics.evm_db(grids, est)),
        ("edge_evm_db", metrics.edge_evm(grids, est, sc.experiment.edge_depth)),
        ("max_abs_error", float(np.max(np.abs(est - grids)))),
        ("orthogonality_db", orthogonality_report(filt)),
    ]
    for name, value in rows:
        print(f"{name}: {value:.6g}")
    write_csv(os.path.join(out, "roundtrip.csv"), ("metric", "value"), rows)


COMMANDS = {
    "design": cmd_design,
    "sweep-gamma": cmd_sweep_gamma,
    "evm": cmd_evm,
    "ber": cmd_ber,
    "papr": cmd_papr,
    "psd": cmd_psd,
    "roundtrip": cmd_roundtrip,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML scenario file (defaults reproduce the reference setup)")
    common.add_argument("--out", help="output directory (overrides output.dir)")
    common.add_argument("--seed", type=int, help="override experiment.seed")
    common.add_argument("--threads", type=int, default=1, help="worker threads for burst chunks")
    common.add_argument("--verbose", "-v", action="count", default=0)

    parser = argparse.ArgumentParser(
        prog="fbmcvs", description="FBMC-OQAM tail shortening with virtual symbols."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "design": "build or load the head/tail cancellation designs",
        "sweep-gamma": "residual tail and cancellation energy versus gamma",
        "evm": "edge-symbol EVM of every shortening method",
        "ber": "BER of back-to-back packets over AWGN",
        "papr": "PAPR CCDF of every shortening method",
        "psd": "Welch PSD of every shortening method",
        "roundtrip": "noise-free modulator/demodulator check",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        sc = load_scenario(args.config)
        if args.seed is not None:
            sc = sc.replace("experiment", seed=args.seed)
        if args.out is not None:
            sc = sc.replace("output", dir=args.out)
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        out = sc.output.dir
        os.makedirs(out, exist_ok=True)
        COMMANDS[args.command](sc, out, args.threads)
    except (ConfigError, DesignMismatchError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
