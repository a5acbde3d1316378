"""Acceptance criteria, one test each; every test logs a PASS/FAIL line."""

import json
import math
import os
import time

import numpy as np
import pytest

from trajrss.crlb import (
    crlb_report,
    fisher_matrix,
    fisher_matrix_from_sums,
    gradient_vectors,
    inverse_diagonal,
)
from trajrss.estimators import ESTIMATORS, GridModel, estimate, estimate_all
from trajrss.model import mean_rss, rng, synthesize
from trajrss.montecarlo import (
    TrialBatch,
    cep_map,
    child_seed,
    quantization_floor,
    run_batch,
    sweep_gamma,
    sweep_sigma,
)
from trajrss.scenario import hexagon_scenario

from conftest import random_scenario

METHODS = tuple(ESTIMATORS)
SEED = 0


def fd_jacobian(u1, scenario, h=1e-3):
    u1 = np.asarray(u1, dtype=float)
    out = np.empty((3, scenario.K * scenario.N))
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        out[i] = [(mean_rss(u1 + e, scenario, k, n) - mean_rss(u1 - e, scenario, k, n)) / (2 * h)
                  for k in range(scenario.K) for n in range(scenario.N)]
    return out


def combined_se(a, b):
    return math.hypot(a.stats.rms_stderr, b.stats.rms_stderr)


def test_01_zero_noise_exactness(acceptance_log, aoi_grid):
    sc = hexagon_scenario(sigma=0.0)
    rss = synthesize(sc, SEED)
    details, ok = [], True
    for name in METHODS:
        t0 = time.perf_counter()
        report = estimate(name, rss, sc, aoi_grid)
        elapsed = time.perf_counter() - t0
        exact = np.array_equal(report.u1_hat, sc.true_u1)
        zero = abs(report.objective_at_min) <= 1e-9
        ok &= exact and zero and elapsed < 1.0
        details.append(f"{name}: miss={report.miss_distance(sc.true_u1):g} m Q={report.objective_at_min:.1e} "
                       f"t={elapsed:.2f}s")
    acceptance_log("1 zero-noise exactness", ok, "; ".join(details))
    assert ok


def test_02_gradient_oracle(acceptance_log):
    worst = 0.0
    for seed in range(100):
        sc = random_scenario(np.random.default_rng(10_000 + seed))
        analytic = gradient_vectors(sc.true_u1, sc)
        fd = fd_jacobian(sc.true_u1, sc)
        rel = np.linalg.norm(analytic - fd, axis=0) / np.linalg.norm(analytic, axis=0)
        worst = max(worst, float(rel.max()))
    ok = worst <= 1e-5
    acceptance_log("2 gradient oracle", ok, f"worst per-cell relative error {worst:.2e} over 100 points (<= 1e-5)")
    assert ok


def test_03_fisher_dual_path(acceptance_log):
    worst_g = worst_inv = 0.0
    for seed in range(100):
        sc = random_scenario(np.random.default_rng(20_000 + seed))
        a = fisher_matrix(sc.true_u1, sc).g
        b = fisher_matrix_from_sums(sc.true_u1, sc).g
        worst_g = max(worst_g, float(np.abs(a - b).max() / np.abs(b).max()))
        diag, _ = inverse_diagonal(a)
        ref = np.diag(np.linalg.inv(a))
        worst_inv = max(worst_inv, float(np.max(np.abs(diag - ref) / np.abs(ref))))
    ok = worst_g <= 1e-10 and worst_inv <= 1e-10
    acceptance_log("3 FIM dual path", ok,
                   f"bilinear vs sums {worst_g:.1e}, cofactor vs generic inverse {worst_inv:.1e} (<= 1e-10)")
    assert ok


def test_04_crlb_linearity_and_information(acceptance_log, hexagon):
    worst = 0.0
    for sigma in (0.1, 1.0, 2.5, 6.0, 10.0, 17.3):
        one = crlb_report(hexagon.true_u1, hexagon, sigma).miss_distance_bound
        two = crlb_report(hexagon.true_u1, hexagon, 2 * sigma).miss_distance_bound
        worst = max(worst, abs(two - 2 * one) / math.ulp(two))
    full = crlb_report(hexagon.true_u1, hexagon, 6.0).miss_distance_bound
    first = hexagon.first_steps(1)
    single = crlb_report(first.true_u1, first, 6.0).miss_distance_bound
    ok = worst <= 1.0 and full < single
    acceptance_log("4 CRLB sigma-linearity and information", ok,
                   f"max |b(2s) - 2 b(s)| = {worst:g} ulp; K=10 {full:.2f} m < K=1 {single:.2f} m")
    assert ok


@pytest.mark.slow
def test_05_sigma_sweep(acceptance_log, hexagon, aoi_grid):
    sigmas = [2.0, 4.0, 6.0, 8.0, 10.0]
    res = sweep_sigma(hexagon, sigmas, METHODS, n_trials=300, seed=SEED, grid=aoi_grid, threads=0)
    floor = quantization_floor(aoi_grid)
    a = b = d = True
    c = True
    lines = []
    for s in sigmas:
        joint, base = res.row(s, "joint"), res.row(s, "baseline")
        bst, tbs = res.row(s, "bst"), res.row(s, "tbs")
        crlb = joint.crlb
        a_ok = crlb - floor <= joint.stats.rms <= 1.3 * crlb
        b_ok = base.stats.rms - joint.stats.rms > 2 * combined_se(joint, base)
        c_ok = bst.stats.rms < base.stats.rms if s >= 8.0 else True
        d_ok = tbs.stats.rms <= base.stats.rms + 2 * combined_se(tbs, base)
        a, b, c, d = a and a_ok, b and b_ok, c and c_ok, d and d_ok
        lines.append(f"s={s:g}: crlb={crlb:.1f} joint={joint.stats.rms:.1f} bst={bst.stats.rms:.1f} "
                     f"tbs={tbs.stats.rms:.1f} base={base.stats.rms:.1f}")
    ok = a and b and c and d
    acceptance_log("5 sigma sweep", ok,
                   f"(a)={a} (b)={b} (c)={c} (d)={d}; rms miss in m, 300 trials: " + "; ".join(lines))
    assert ok


@pytest.mark.slow
def test_06_gamma_sweep(acceptance_log, hexagon, aoi_grid):
    gammas = [2.5, 3.0, 3.5, 4.0]
    res = sweep_gamma(hexagon.with_sigma(6.0), gammas, METHODS, n_trials=300, seed=SEED, grid=aoi_grid,
                      threads=0)
    joint_ok = bst_ok = True
    lines = []
    for g in gammas:
        joint, base, bst = res.row(g, "joint"), res.row(g, "baseline"), res.row(g, "bst")
        joint_ok &= base.stats.rms - joint.stats.rms > 2 * combined_se(joint, base)
        if g <= 3.0:
            bst_ok &= bst.stats.rms < base.stats.rms
        lines.append(f"g={g:g}: joint={joint.stats.rms:.1f} bst={bst.stats.rms:.1f} base={base.stats.rms:.1f}")
    ok = joint_ok and bst_ok
    acceptance_log("6 gamma sweep", ok, f"joint<base={joint_ok} bst<base={bst_ok}; " + "; ".join(lines))
    assert ok


def brute_minimizer(nodes, rss, scenario, mask):
    """Grid minimizer of the profiled objective on the masked cells, computed from scratch."""
    vbs = scenario.base_stations[None, :, :] - scenario.trajectory.displacements[:, None, :]
    d = np.linalg.norm(nodes[:, None, None, :] - vbs[None], axis=-1)
    pl = scenario.path_loss
    a = 10 * pl.gamma * np.log10(pl.d0 / d)
    res = (rss[None] - a)[:, mask]
    q = np.sum((res - res.mean(axis=1, keepdims=True)) ** 2, axis=1)
    return nodes[int(np.argmin(q))]


def test_07_fusion_identities(acceptance_log, small_scenario, small_grid):
    model = GridModel(small_scenario, small_grid)
    nodes = small_grid.nodes()
    K, N = small_scenario.K, small_scenario.N
    mean_ok = comp_ok = True
    for t in range(1000):
        rss = synthesize(small_scenario, child_seed(SEED + 7, t))
        reports = estimate_all(("bst", "tbs"), rss, small_scenario, small_grid, model=model)
        for name, report in reports.items():
            comps = report.per_component_estimates
            mean_ok &= np.array_equal(report.u1_hat, np.mean(comps, axis=0))
            n_comp = N if name == "bst" else K
            for c in range(n_comp):
                mask = np.zeros((K, N), dtype=bool)
                if name == "bst":
                    mask[:, c] = True
                else:
                    mask[c, :] = True
                comp_ok &= np.array_equal(comps[c], brute_minimizer(nodes, rss.values, small_scenario, mask))
    ok = mean_ok and comp_ok
    acceptance_log("7 fusion identities", ok,
                   f"fused == mean of components: {mean_ok}; components == brute-force minimizers: {comp_ok} "
                   "(1000 trials)")
    assert ok


def test_08_shift_invariance(acceptance_log, hexagon, aoi_grid):
    model = GridModel(hexagon, aoi_grid)
    gen = rng(SEED + 8)
    changed = 0
    for t in range(100):
        rss = synthesize(hexagon, child_seed(SEED + 8, t))
        shift = float(gen.uniform(-50.0, 50.0))
        before = estimate_all(METHODS, rss, hexagon, aoi_grid, model=model)
        after = estimate_all(METHODS, rss.shifted(shift), hexagon, aoi_grid, model=model)
        changed += sum(not np.array_equal(before[m].u1_hat, after[m].u1_hat) for m in METHODS)
    ok = changed == 0
    acceptance_log("8 shift invariance", ok, f"{changed} of 400 estimates moved under random shifts in [-50, 50] dB")
    assert ok


def _strip_timestamps(text: str) -> str:
    doc = json.loads(text)
    doc["metadata"].pop("created_utc")
    return json.dumps(doc, sort_keys=True)


def test_09_determinism(acceptance_log, hexagon, aoi_grid, tmp_path):
    workers = max(4, os.cpu_count() or 1)
    identical = True
    for name in METHODS:
        batch = TrialBatch(hexagon, name, aoi_grid, 60, master_seed=SEED + 9)
        files = []
        for label, threads in (("serial", 1), ("parallel", workers)):
            result = run_batch(batch, threads=threads)
            result.to_csv(tmp_path / f"{name}_{label}.csv")
            result.to_json(tmp_path / f"{name}_{label}.json")
            files.append(((tmp_path / f"{name}_{label}.csv").read_bytes(),
                          _strip_timestamps((tmp_path / f"{name}_{label}.json").read_text())))
        identical &= files[0] == files[1]
    acceptance_log("9 determinism", identical, f"serial vs {workers} threads, 4 estimators x 60 trials")
    assert identical


@pytest.mark.slow
def test_10_cep_map(acceptance_log, hexagon, aoi_grid):
    m = cep_map(hexagon, [1.0, 4.0, 7.0, 10.0], [2.0, 3.0, 4.0, 5.0], threshold=100.0, n_trials=200,
                seed=SEED, grid=aoi_grid, threads=0)
    monotone = True
    for j in range(len(m.gammas)):
        for i in range(len(m.sigmas) - 1):
            slack = 2 * math.hypot(m.stderr[i, j], m.stderr[i + 1, j])
            if m.radii[i + 1, j] < m.radii[i, j] - slack:
                monotone = False
            # the mask may only switch off as sigma grows, unless the cell is within slack of the threshold
            if m.mask[i + 1, j] and not m.mask[i, j] and m.radii[i, j] - m.threshold > 2 * m.stderr[i, j]:
                monotone = False
    corner = bool(np.all(m.radii[0] < 100.0))
    ok = monotone and corner
    rows = "; ".join(f"s={s:g}: " + ",".join(f"{r:.0f}" for r in m.radii[i]) for i, s in enumerate(m.sigmas))
    acceptance_log("10 CEP map", ok, f"monotone={monotone} smallest-sigma row < 100 m={corner}; "
                                     f"CEP m over gamma 2..5: {rows}")
    assert ok
