"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line."""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np

from gateshadow.applications import (
    average_gate_fidelity,
    crosstalk_metrics,
    crosstalk_reconstruct,
    exact_marginals,
    learn_unitary,
    pauli_eigenvalues,
    reconstruct_unital,
    reconstruction_constant,
    rz_product_model,
)
from gateshadow.clifford import (
    LocalCliffordElement,
    enumerate_cliffords,
    local_layer_tables,
    local_second_moment_oracle,
    permutation_tables,
    sample_clifford,
    second_moment_oracle,
    third_moment_weingarten,
)
from gateshadow.estimation import (
    ProbeOperator,
    bound_local_clifford,
    bound_pauli_interleaved,
    bound_unitary_clifford,
    correlate_dense,
    correlate_pauli_prop,
    correlation_values,
    decay_parameter,
    estimate,
    pauli_tau_values,
)
from gateshadow.experiment import ExperimentConfig, ShadowRecord, run_experiment
from gateshadow.liouville import projector
from gateshadow.noise import random_cptp, random_pauli_channel, random_unital
from gateshadow.pauli import PauliString

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
SEED = 0


def _report(capsys, number: int, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail


def _config(name: str, **overrides) -> ExperimentConfig:
    doc = json.loads((CONFIGS / f"{name}.json").read_text())
    doc.update(overrides)
    return ExperimentConfig.from_json(doc)


def _ptm_noise(left, right=None) -> dict:
    noise = {"lambda_L": [{"type": "ptm", "params": {"rows": left.matrix.tolist()}}]}
    if right is not None:
        noise["lambda_R"] = [{"type": "ptm", "params": {"rows": right.matrix.tolist()}}]
    return noise


def _p_ad(n: int) -> ProbeOperator:
    return ProbeOperator.dense(projector("ad", n).superop, projector("ad", n), name="P_ad")


def test_criterion_01_noiseless_consistency(capsys):
    t0 = time.perf_counter()
    cfg = ExperimentConfig("multi_clifford", 2, (1, 2, 4, 8), 2000, seed=SEED)
    res = estimate(run_experiment(cfg), _p_ad(2), seed=SEED)
    k1 = res.averages.points[1].mean
    elapsed = time.perf_counter() - t0
    ok = abs(res.p - 1) <= 0.01 and abs(k1 - 1) <= 0.02 and elapsed < 60
    _report(capsys, 1, ok, f"p={res.p:.4f} (1 +- 0.01), k(1)={k1:.4f} (1 +- 0.02), {elapsed:.1f}s")


def test_criterion_02_depolarizing_recovery(capsys):
    t0 = time.perf_counter()
    cfg = _config("depolarizing", seed=SEED)
    noise, _ = cfg.build_noise()
    oracle = decay_parameter(noise.channel, _p_ad(2))
    res = estimate(run_experiment(cfg), _p_ad(2), seed=SEED)
    elapsed = time.perf_counter() - t0
    ok = abs(oracle - 0.95) < 1e-12 and abs(res.p - 0.95) <= 0.005 and elapsed < 120
    _report(capsys, 2, ok, f"p={res.p:.4f} (oracle {oracle:.4f} +- 0.005), {elapsed:.1f}s")


def test_criterion_03_unitary_learning(capsys):
    t0 = time.perf_counter()
    shadow = run_experiment(_config("unitary_rz", seed=SEED))
    grid_doc = json.loads((CONFIGS / "unitary_rz_grid.json").read_text())
    grid = np.array([(a, b) for a in grid_doc["axes"][0] for b in grid_doc["axes"][1]])
    land = learn_unitary(shadow, rz_product_model(2), grid, grid_doc["names"], seed=SEED)
    best = np.array(land.argmax)
    elapsed = time.perf_counter() - t0
    ok = np.max(np.abs(best - [0.07, 0.13])) <= 0.02 + 1e-9 and elapsed < 600
    _report(capsys, 3, ok, f"argmax=({best[0]:.2f}, {best[1]:.2f}) vs (0.07, 0.13), step 0.02, {elapsed:.1f}s")


def test_criterion_04_spam_robustness(capsys):
    clean = estimate(run_experiment(_config("depolarizing", seed=SEED)), _p_ad(2), seed=SEED)
    dirty = estimate(run_experiment(_config("depolarizing_spam", seed=SEED)), _p_ad(2), seed=SEED)
    dp, dB = abs(clean.p - dirty.p), abs(clean.B - dirty.B)
    ok = dp < 0.01 and dB > 0.05
    _report(capsys, 4, ok, f"|dp|={dp:.4f} (< 0.01), |dB|={dB:.4f} (> 0.05)")


def test_criterion_05_unitary_clifford_bound(capsys):
    bound = bound_unitary_clifford()
    worst = 0.0
    lengths = tuple(range(1, 21))
    rng = np.random.default_rng(SEED)
    for n, S in ((1, 1000), (2, 500), (3, 300)):
        noise = _ptm_noise(random_cptp(n, rng, strength=0.2), random_cptp(n, rng, strength=0.2))
        shadow = run_experiment(ExperimentConfig("multi_clifford", n, lengths, S, noise=noise, seed=SEED))
        probes = [ProbeOperator.from_clifford(sample_clifford(n, rng), projector("ad", n)) for _ in range(3)]
        for m in lengths:
            for probe in probes:
                worst = max(worst, float(correlation_values(shadow, m, probe).var(ddof=1)))
    ok = worst <= bound
    _report(capsys, 5, ok, f"max empirical variance {worst:.3f} over n=1..3, m<=20 (bound {bound:g})")


def test_criterion_06_local_clifford_bound(capsys):
    rng = np.random.default_rng(SEED)
    n = 2
    noise = _ptm_noise(random_cptp(n, rng, strength=0.2), random_cptp(n, rng, strength=0.2))
    lengths = (1, 2, 3, 4, 6, 8, 12, 16)
    shadow = run_experiment(ExperimentConfig("local_clifford", n, lengths, 3000, noise=noise, seed=SEED))
    worst_ratio, detail = 0.0, ""
    for w in (1, 2, 3):
        irrep = projector("local", n, w)
        for _ in range(3):
            idx = tuple(int(rng.integers(24)) if (w >> (n - 1 - j)) & 1 else 0 for j in range(n))
            probe = ProbeOperator.from_clifford(LocalCliffordElement(n, idx), irrep)
            for m in lengths:
                var = float(correlation_values(shadow, m, probe).var(ddof=1))
                bound = bound_local_clifford(probe, m)
                if var / bound > worst_ratio:
                    worst_ratio, detail = var / bound, f"{irrep.label} m={m}: {var:.2f} <= {bound:g}"
    ok = worst_ratio <= 1.0
    _report(capsys, 6, ok, f"worst variance/bound {worst_ratio:.3f} ({detail})")


def test_criterion_07_pauli_noise(capsys):
    t0 = time.perf_counter()
    n = 2
    channel = random_pauli_channel(n, np.random.default_rng(SEED), min_eigenvalue=0.9)
    cfg = ExperimentConfig("pauli_interleaved", n, (1, 2, 4, 8, 16), 20000, noise=_ptm_noise(channel), seed=SEED)
    shadow = run_experiment(cfg)
    ev = pauli_eigenvalues(shadow, seed=SEED)
    oracle = np.diag(channel.matrix)
    err = max(abs(ev.values[PauliString.from_index(n, t).label] - oracle[t]) for t in range(1, 4**n))
    bound = bound_pauli_interleaved(n)
    var = max(float(pauli_tau_values(shadow, m).var(axis=0, ddof=1).max()) for m in shadow.lengths)
    elapsed = time.perf_counter() - t0
    ok = err <= 0.01 and var <= bound and elapsed < 300
    _report(capsys, 7, ok, f"max |fit - oracle| {err:.4f} (<= 0.01), max variance {var:.2f} (<= {bound:.2f}), {elapsed:.1f}s")


def test_criterion_08_crosstalk_exactness(capsys):
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(20):
        ch = random_cptp(2, rng)
        ms = exact_marginals(ch, ["01", "10", "11"])
        for w, m in ms.marginals.items():
            mask = projector("local", 2, w).mask.astype(float)
            worst = max(worst, float(np.linalg.norm(m - mask[:, None] * ch.matrix * mask[None, :])))
    _report(capsys, 8, worst <= 1e-10, f"max Frobenius error {worst:.2e} over 20 channels (<= 1e-10)")


def test_criterion_09_crosstalk_reproduction(capsys):
    t0 = time.perf_counter()
    metrics = {}
    for name in ("crosstalk_xx", "crosstalk_product"):
        ms = crosstalk_reconstruct(run_experiment(_config(name, seed=SEED)), seed=SEED)
        (metrics[name],) = crosstalk_metrics(ms)
    xx, prod = metrics["crosstalk_xx"], metrics["crosstalk_product"]
    elapsed = time.perf_counter() - t0
    ratio = xx.hs_norm / prod.hs_norm
    control_zero = prod.consistent_with_zero()
    ok = ratio > 5 and control_zero and elapsed < 1800
    _report(
        capsys,
        9,
        ok,
        f"HS(XX)={xx.hs_norm:.3f}, HS(product)={prod.hs_norm:.3f}, ratio {ratio:.2f} (> 5); "
        f"control consistent with zero: {control_zero}, {elapsed:.1f}s",
    )


def test_criterion_10_unital_reconstruction(capsys):
    rng = np.random.default_rng(SEED)
    cs = enumerate_cliffords(1)
    big = reconstruction_constant(1)
    exact_err, noisy_ok, worst_noisy = 0.0, True, 0.0
    for _ in range(20):
        ch = random_unital(1, rng)
        fids = {c: average_gate_fidelity(c.to_ptm(), ch) for c in cs}
        exact_err = max(exact_err, reconstruct_unital(fids, 1).distance(ch))
        for eps in (1e-3, 1e-2):
            noisy = {c: f + rng.uniform(-eps, eps) for c, f in fids.items()}
            err = reconstruct_unital(noisy, 1).distance(ch)
            worst_noisy = max(worst_noisy, err / (big * eps))
            noisy_ok &= err <= big * eps
    ok = exact_err <= 1e-10 and noisy_ok
    _report(capsys, 10, ok, f"exact error {exact_err:.2e} (<= 1e-10), max noisy error / (D eps) {worst_noisy:.3f} (<= 1)")


def _dense_from_gather(gi: np.ndarray, gs: np.ndarray) -> np.ndarray:
    k, d = gi.shape
    out = np.zeros((k, d, d))
    rows = np.broadcast_to(np.arange(d), (k, d))
    out[np.arange(k)[:, None], rows, gi] = gs
    return out


def _sampled_second_moment(ptms: np.ndarray) -> np.ndarray:
    k, d, _ = ptms.shape
    flat = ptms.reshape(k, d * d)
    mom = (flat.T @ flat / k).reshape(d, d, d, d)  # [i, j, a, b] = E A_ij A_ab
    return mom.transpose(0, 2, 1, 3).reshape(d * d, d * d)


def test_criterion_11_representation_oracles(capsys):
    rng = np.random.default_rng(SEED)
    draws = 100_000
    second_err = 0.0
    multi_tables = {}
    for n in (1, 2):
        cs = [sample_clifford(n, rng) for _ in range(draws)]
        tabs = [permutation_tables(c) for c in cs]
        gi = np.stack([t.gather_idx for t in tabs])
        gs = np.stack([t.gather_sign for t in tabs]).astype(float)
        multi_tables[n] = (gi, gs)
        second_err = max(second_err, np.abs(_sampled_second_moment(_dense_from_gather(gi, gs)) - second_moment_oracle(n)).max())
        li, ls = local_layer_tables(n, rng.integers(0, 24, size=(draws, n)))
        local = _sampled_second_moment(_dense_from_gather(li, ls.astype(float)))
        second_err = max(second_err, np.abs(local - local_second_moment_oracle(n)).max())

    w = third_moment_weingarten(2)
    idem = float(np.abs(w @ w - w).max())
    # compare selected columns of E omega^{(x)3}: the heaviest columns plus random ones
    d = 16
    norms = np.linalg.norm(w, axis=0)
    cols = np.concatenate([np.argsort(norms)[-40:], rng.choice(d**3, 24, replace=False)])
    gi, gs = multi_tables[2]
    inv = np.argsort(gi, axis=1)  # omega e_c = sign[inv[c]] e_{inv[c]}
    third_err = 0.0
    for col in cols:
        a, b, c = col // (d * d), (col // d) % d, col % d
        ia, ib, ic = inv[:, a], inv[:, b], inv[:, c]
        rows = np.arange(draws)
        sign = gs[rows, ia] * gs[rows, ib] * gs[rows, ic]
        est = np.bincount(ia * d * d + ib * d + ic, weights=sign, minlength=d**3) / draws
        third_err = max(third_err, float(np.abs(est - w[:, col]).max()))
    ok = second_err <= 1e-2 and idem <= 1e-10 and third_err <= 2e-2
    _report(
        capsys,
        11,
        ok,
        f"2nd moment max error {second_err:.2e} (<= 1e-2), idempotency {idem:.1e} (<= 1e-10), "
        f"3rd moment column error {third_err:.2e} (<= 2e-2)",
    )


def test_criterion_12_estimator_equivalence(capsys):
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 4))
        m = int(rng.integers(1, 6))
        x = int(rng.integers(2**n))
        if rng.random() < 0.5:
            gates = tuple(sample_clifford(n, rng) for _ in range(m))
            irrep = projector("ad", n)
            if rng.random() < 0.5:
                probe = ProbeOperator.from_clifford(sample_clifford(n, rng), irrep)
            else:
                probe = ProbeOperator.rank_one_pauli(PauliString.from_index(n, int(rng.integers(1, 4**n))), irrep)
        else:
            gates = tuple(LocalCliffordElement(n, tuple(int(i) for i in rng.integers(0, 24, n))) for _ in range(m))
            tau = PauliString.from_index(n, int(rng.integers(1, 4**n)))
            if rng.random() < 0.5:
                irrep = projector("local", n, tau.support)
                probe = ProbeOperator.from_clifford(LocalCliffordElement(n, tuple(int(i) for i in rng.integers(0, 24, n))), irrep)
            else:
                probe = ProbeOperator.rank_one_pauli(tau)
        rec = ShadowRecord(m, gates, x)
        worst = max(worst, abs(correlate_pauli_prop(rec, probe) - correlate_dense(rec, probe)))
    _report(capsys, 12, worst <= 1e-10, f"max |prop - dense| {worst:.2e} over 1000 records (<= 1e-10)")
