"""End-to-end acceptance checks at the reference scale.

Every test prints one ``[criterion N] PASS/FAIL: ...`` line. Run with
``pytest tests/test_acceptance.py -v -s`` to see them next to the verdicts.
"""

import math
import os

import numpy as np
import pytest
import yaml

import oracles
from fbmcvs import cli, metrics, sim
from fbmcvs.config import Scenario
from fbmcvs.prototype import phydyas_filter
from fbmcvs.tailshort import EDGES, design_basis, normal_residual, shorten_many
from fbmcvs.waveform import BurstConfig, demodulate_slots, synthesize, synthesize_many, synthesize_naive

THREADS = max(1, min(8, os.cpu_count() or 1))


def report(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'}: {detail}")


@pytest.fixture(scope="module")
def scenario(tmp_path_factory):
    out = tmp_path_factory.mktemp("acceptance")
    return Scenario().replace("output", dir=str(out), cache_dir=str(out / "cache"))


@pytest.fixture(scope="module")
def sweep(scenario):
    rows = cli.sweep_gamma_rows(scenario, THREADS)
    return {g: (x1, x2) for g, x1, x2 in rows}


def test_criterion_1_untreated_tail_energy(scenario, sweep, capsys):
    xi1, _ = sweep[math.inf]
    ok = abs(xi1 - (-12.1)) <= 1.0 and scenario.experiment.bursts >= 200
    report(capsys, 1, ok, f"untreated tail energy {xi1:.2f} dBc (target -12.1 +/- 1.0)")
    assert ok


def test_criterion_2_gamma_zero_extremes(sweep, capsys):
    xi1, xi2 = sweep[0.0]
    ok = abs(xi1 - (-53.3)) <= 2.0 and abs(xi2 - 28.0) <= 2.0
    report(capsys, 2, ok, f"gamma=0: xi1 {xi1:.2f} dBc (-53.3 +/- 2), xi2 {xi2:.2f} dBc (28.0 +/- 2)")
    assert ok


def test_criterion_3_operating_points(sweep, capsys):
    xi1 = sweep[0.1][0]
    xi2 = sweep[0.005][1]
    ok = xi1 <= -45.0 and xi2 <= -10.0
    report(capsys, 3, ok, f"gamma=0.1 xi1 {xi1:.2f} dBc (<= -45); gamma=0.005 xi2 {xi2:.2f} dBc (<= -10)")
    assert xi1 <= -45.0
    assert xi2 <= -10.0


def test_criterion_4_evm_ordering(scenario, capsys):
    rows = cli.evm_rows(scenario, THREADS)
    assert [r[0] for r in rows] == [1e-3, 1e-2, 1e-1, 1.0]
    ok, parts = True, []
    for g, none, hard, windowed, virtual, vt in rows:
        ok &= vt < hard < windowed
        if g == 0.1:
            ok &= hard - vt >= 10.0
        parts.append(f"g={g:g}: vt {vt:.1f} hard {hard:.1f} win {windowed:.1f}")
    report(capsys, 4, ok, "; ".join(parts) + " (dB)")
    assert ok


def test_criterion_5_ber_overlap(scenario, capsys):
    b = scenario.ber
    assert b.gammas == [0.1]
    sc = sim.BerScenario(
        config=scenario.burst_config(),
        filt=scenario.prototype(),
        ebn0_db=tuple(b.ebn0_db),
        gammas=tuple(b.gammas),
        packets=b.packets,
        order=64,
        seed=scenario.experiment.seed,
        threads=THREADS,
        chunk=b.chunk,
    )
    rows = sim.run_ber_experiment(sc)
    by = {(r.scenario, r.ebn0_db): r for r in rows}
    ok = all(r.bits >= 2_000_000 for r in rows)
    parts = []
    for e in b.ebn0_db:
        iso, ov = by[("isolated", e)], by[("overlap-virtual", e)]
        ok &= iso.ci_low <= ov.ber <= iso.ci_high
        parts.append(f"{e:g} dB iso {iso.ber:.2e} [{iso.ci_low:.1e},{iso.ci_high:.1e}] virt {ov.ber:.2e}")
    top = max(b.ebn0_db)
    iso, none = by[("isolated", top)], by[("overlap-none", top)]
    ok &= none.ci_low > iso.ci_high
    parts.append(f"untreated overlap at {top:g} dB {none.ber:.2e} (ci_low {none.ci_low:.1e})")
    report(capsys, 5, ok, "; ".join(parts))
    assert ok


def test_criterion_6_psd(scenario, capsys):
    est = cli.psd_estimates(scenario, THREADS)
    diff = float(np.max(np.abs(est["virtual"].power_db - est["none"].power_db)))
    active = scenario.burst_config().active
    sides = {m: max(est[m].at(active[-1] + 1), est[m].at(active[0] - 1)) for m in est}
    ok_a = diff <= 0.5
    ok_b = sides["virtual+truncate"] <= -38.0
    report(
        capsys,
        6,
        ok_a and ok_b,
        f"(a) max |virtual - none| {diff:.2f} dB (<= 0.5) {'pass' if ok_a else 'fail'}; "
        f"(b) first adjacent subcarrier: virtual+truncate {sides['virtual+truncate']:.1f} dB (<= -38) "
        f"{'pass' if ok_b else 'fail'}, none {sides['none']:.1f}, hard {sides['hard']:.1f}, "
        f"windowed {sides['windowed']:.1f}",
    )
    assert ok_a
    assert ok_b


def test_criterion_7_papr(scenario, capsys):
    p = scenario.papr
    assert p.bursts >= 10_000 and p.probability == 1e-2
    values = cli.papr_values(scenario, THREADS)
    at = {m: metrics.papr_at_ccdf(values[m], p.probability) for m in values}
    delta = {m: at[m] - at["none"] for m in ("virtual", "virtual+truncate")}
    ok = all(abs(d) <= 0.3 for d in delta.values())
    detail = ", ".join(f"{m} {at[m]:.2f}" for m in cli.METHOD_COLUMNS)
    report(capsys, 7, ok, f"PAPR at CCDF 1e-2 over {p.bursts} bursts: {detail} dB (shortened within 0.3 of none)")
    assert ok


def test_criterion_8_solver_properties(scenario, sweep, capsys):
    filt = scenario.prototype()
    gammas = sorted(set(scenario.experiment.gammas) | set(scenario.experiment.evm_gammas)
                    | {scenario.papr.gamma, scenario.psd.gamma})
    worst = 0.0
    for g in gammas:
        cfg = scenario.burst_config(g)
        for design, edge in zip(cli.designs_for(scenario, filt, g), EDGES):
            # recomputed from B, not read back from the cache file
            worst = max(worst, normal_residual(design.B, design_basis(filt, cfg, edge), g))

    cfg = scenario.burst_config()
    K_b, K_e = cfg.K_b_burst, cfg.K_e_burst
    designs = cli.designs_for(scenario, filt, cfg.gamma)
    rng = np.random.default_rng(8)
    violations = 0
    for _ in range(10):
        grids = oracles.random_pam(rng, (100, cfg.n_active, cfg.N))
        data = shorten_many(grids, filt, cfg, "none")
        b = shorten_many(grids, filt, cfg, "virtual", designs=designs, data=data.samples)
        cost_opt = metrics.batch_outside_energy(b.samples, b.origin, K_b, K_e) + cfg.gamma * (
            metrics.batch_inside_energy(b.virtual, b.origin, K_b, K_e)
        )
        cost_zero = metrics.batch_outside_energy(data.samples, 0, K_b, K_e)
        violations += int(np.sum(cost_opt > cost_zero * (1 + 1e-12)))

    grid = sorted(g for g in sweep if math.isfinite(g))
    xi1 = [sweep[g][0] for g in grid]
    xi2 = [sweep[g][1] for g in grid]
    mono = all(np.diff(xi1) >= -1e-9) and all(np.diff(xi2) <= 1e-9)
    ok = worst < 1e-9 and violations == 0 and mono
    report(
        capsys,
        8,
        ok,
        f"max normal-equation residual {worst:.1e} (< 1e-9); cost increases on {violations}/1000 bursts; "
        f"monotone over {len(grid)} gammas: {mono}",
    )
    assert ok


def test_criterion_9_oracle_equivalence(scenario, capsys):
    rng = np.random.default_rng(9)
    worst = 0.0
    for M in (4, 8, 16, 32):
        filt = phydyas_filter(M)
        for N in (2, 4, 6, 8):
            cfg = BurstConfig(M=M, active=tuple(range(M)), N=N)
            grid = rng.standard_normal((M, N))
            fast = synthesize(grid, filt, cfg).samples
            naive = synthesize_naive(grid, filt, cfg).samples
            ref = oracles.synthesize(grid, filt.taps, M, cfg.active, range(N), np.arange(cfg.burst_length))
            worst = max(worst, np.max(np.abs(fast - naive)), np.max(np.abs(fast - ref)))
    cfg, filt = scenario.burst_config(), scenario.prototype()
    grids = oracles.random_pam(rng, (200, cfg.n_active, cfg.N))
    est = demodulate_slots(synthesize_many(grids, filt, cfg), 0, np.arange(cfg.N), cfg.active, filt)
    evm = metrics.evm_db(grids, est)
    ok = worst < 1e-12 and evm < -50.0
    report(capsys, 9, ok, f"fast vs naive max error {worst:.1e} (< 1e-12); round-trip EVM {evm:.1f} dB (< -50)")
    assert ok


def test_criterion_10_cli_determinism(scenario, tmp_path, capsys):
    # reference waveform, reduced Monte-Carlo counts to keep two runs per command short
    raw = {
        "experiment": {"bursts": 40, "chunk": 16},
        "ber": {"packets": 8, "chunk": 3, "ebn0_db": [10, 18]},
        "papr": {"bursts": 200},
        "psd": {"bursts": 16},
        "output": {"cache_dir": scenario.cache_dir},
    }
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(raw))
    differing = []
    for command in cli.COMMANDS:
        runs = []
        for i, threads in enumerate((1, max(3, THREADS))):
            out = tmp_path / f"{command}-{i}"
            assert cli.main([command, "--config", str(path), "--out", str(out), "--threads", str(threads)]) == 0
            runs.append({f: (out / f).read_bytes() for f in sorted(os.listdir(out)) if f.endswith(".csv")})
        if not runs[0] or runs[0] != runs[1]:
            differing.append(command)
    ok = not differing
    report(capsys, 10, ok, f"{len(cli.COMMANDS)} subcommands run twice; differing outputs: {differing or 'none'}")
    assert ok
