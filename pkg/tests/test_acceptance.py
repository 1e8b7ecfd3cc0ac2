"""Acceptance criteria 1-10. Each test records a one-line verdict (see conftest)."""

import time

import numpy as np
import pytest
from scipy import stats

import oracles
from acceptance_log import record
from depulse.ar import SegmentPartition, partition_for
from depulse.cli import main
from depulse.detector import Detection, detect_pulses
from depulse.inference import (
    DiscontinuityParams, gp_tail_posterior, likelihood_workspace, marginal_loglik_full,
    simplified_projection, x1_posterior,
)
from depulse.pipeline import RestoreConfig, inject_pulse, restore_excerpt, restore_signal, snr_db
from depulse.pulses import TABLE_I_TRUTH, GpHyper, gram_matrix
from depulse.sampler import rng_for, sigma_d2_step
from depulse.signal_io import Excerpt, write_wav
from depulse.synthetic import ar_signal, table_i_spec, uniform_pulses

SEEDS = range(5)
PULSE_COUNTS = (11, 14, 17)
TRUE_N0 = 66150
SHORT_TAIL = TABLE_I_TRUTH.replace(tau_m=0.01)


def _instances(n, seed, N=12, P=2, M=3):
    rng = np.random.default_rng(seed)
    return [oracles.random_instance(rng, N=N, P=P, M=M) for _ in range(n)]


def test_criterion_01_marginal_likelihood():
    insts = _instances(50, 101)
    t0 = time.perf_counter()
    errs = []
    for ar, n0, M, s2, y, v_t in insts:
        part = SegmentPartition(n0, M, y.size)
        got = marginal_loglik_full(part.split(y), partition_for(ar, part), DiscontinuityParams(n0, M, s2),
                                   v_t, ar.sigma_e2)
        errs.append(abs(got - oracles.marginal_loglik(ar, n0, M, s2, y, v_t)))
    elapsed = time.perf_counter() - t0
    ok = max(errs) <= 1e-6 and elapsed < 5.0
    record(1, ok, f"50 instances, max |dlogL| = {max(errs):.2e} (<= 1e-6), {elapsed:.2f} s (< 5 s)")
    assert ok


def test_criterion_02_x1_posterior():
    worst = 0.0
    for ar, n0, M, s2, y, v_t in _instances(50, 101):
        part = SegmentPartition(n0, M, y.size)
        g = x1_posterior(part.split(y), partition_for(ar, part), DiscontinuityParams(n0, M, s2), v_t, ar.sigma_e2)
        m, c = oracles.x1_posterior(ar, n0, M, s2, y, v_t)
        worst = max(worst, np.linalg.norm(g.mean - m) / np.linalg.norm(m),
                    np.linalg.norm(g.covariance - c) / np.linalg.norm(c))
    ok = worst <= 1e-8
    record(2, ok, f"50 instances, max relative error {worst:.2e} (<= 1e-8)")
    assert ok


def test_criterion_03_gp_posterior():
    worst = 0.0
    rng = np.random.default_rng(7)
    for ar, n0, M, s2, y, v_t in _instances(50, 103, N=24, P=2, M=3):
        part = SegmentPartition(n0, M, y.size)
        pp = partition_for(ar, part)
        ws = likelihood_workspace(part.split(y), pp, DiscontinuityParams(n0, M, s2), v_t, ar.sigma_e2)
        y0, _, y2 = part.split(y)
        hyper = GpHyper(float(rng.uniform(0.05, 1.0)), float(rng.uniform(4.0, 100.0)))
        C = gram_matrix(y2.size, hyper)
        got = gp_tail_posterior((ws.R11, ws.R12, ws.R21, ws.R22), C, y0, y2).mean
        worst = max(worst, np.abs(got - oracles.gp_tail_mean(pp.B, ws.S, ar.sigma_e2, C, y0, y2)).max())
    ok = worst <= 1e-6
    record(3, ok, f"50 instances with N=24, max |dmean| = {worst:.2e} (<= 1e-6)")
    assert ok


def test_criterion_04_projection():
    rng = np.random.default_rng(104)
    idem = sym = 0.0
    for _ in range(200):
        P = int(rng.integers(1, 11))
        N = int(rng.integers(2 * P + 4, 201))
        M = int(rng.integers(1, N - 2 * P - 1))
        n0 = int(rng.integers(P, N - M - P))
        S = simplified_projection(partition_for(oracles.random_ar(rng, P), SegmentPartition(n0, M, N)))
        idem = max(idem, np.linalg.norm(S @ S - S))
        sym = max(sym, np.linalg.norm(S - S.T))
    ok = idem <= 1e-8 and sym <= 1e-10
    record(4, ok, f"200 random AR models, max ||S^2-S|| = {idem:.1e}, max ||S-S^T|| = {sym:.1e}")
    assert ok


def _table_i_seed(seed):
    clean = ar_signal(3.0, seed=seed)
    deg = inject_pulse(clean, table_i_spec(TRUE_N0, 7400, seed=seed))
    dets = detect_pulses(deg)
    d = min(dets, key=lambda d: abs(d.n0 - TRUE_N0))
    start = d.n0 - 500
    ex = Excerpt(start, deg.samples[start:start + 8000])
    truth_local = TRUE_N0 - start
    out = {}
    for kind in ("shape", "gp"):
        t0 = time.perf_counter()
        _, rep = restore_excerpt(ex, Detection(500, d.M, d.score), RestoreConfig(kind=kind, seed=seed),
                                 rng_for(seed))
        out[kind] = (rep.estimate, time.perf_counter() - t0)
    return truth_local, out


def test_criterion_05_table_i_replication():
    passes, notes = 0, []
    for seed in SEEDS:
        truth, out = _table_i_seed(seed)
        shape, t_shape = out["shape"]
        gp, t_gp = out["gp"]
        covered = [f for f in ("V_t", "tau_m", "tau_f", "f_min")
                   if shape.params[f].lo <= getattr(TABLE_I_TRUTH, f) <= shape.params[f].hi]
        shape_ok = (shape.n0, shape.M) == (truth, 10) and len(covered) == 4
        s = gp.params["sigma_d2"]
        gp_ok = (gp.n0, gp.M) == (truth, 10) and s.lo <= 0.5 <= s.hi
        budget_ok = t_shape + t_gp <= 600
        passes += shape_ok and gp_ok and budget_ok
        notes.append(
            f"seed {seed}: shape (n0,M)=({shape.n0 - truth:+d},{shape.M}) covers {len(covered)}/4 "
            f"[{'ok' if shape_ok else 'x'}]; gp (n0,M)=({gp.n0 - truth:+d},{gp.M}) "
            f"sigma_d2 {s} [{'ok' if gp_ok else 'x'}]; {t_shape + t_gp:.0f} s"
        )
    ok = passes >= 4
    record(5, ok, f"{passes}/5 seeds pass (>= 4 required)\n    " + "\n    ".join(notes))
    assert ok


def _multi_fixture(n):
    clean = ar_signal(8.0, seed=0)
    spec = uniform_pulses(n, len(clean), 1400, params=SHORT_TAIL, seed=0)
    return clean, spec, inject_pulse(clean, spec)


def test_criterion_06_detector():
    ok_all, notes = True, []
    for n in PULSE_COUNTS:
        _, spec, deg = _multi_fixture(n)
        t0 = time.perf_counter()
        dets = detect_pulses(deg)
        elapsed = time.perf_counter() - t0
        truth = [p.n0 for p in spec.pulses]
        found = sum(any(abs(d.n0 - t) <= 16 for d in dets) for t in truth)
        spurious = sum(not any(abs(d.n0 - t) <= 16 for t in truth) for d in dets)
        ok = found == n and spurious == 0 and elapsed < 1.0
        ok_all &= ok
        notes.append(f"{n} pulses: found {found}/{n}, spurious {spurious}, {elapsed * 1e3:.0f} ms")
    record(6, ok_all, "; ".join(notes))
    assert ok_all


def test_criterion_07_snr_gain():
    gains = []
    for n in PULSE_COUNTS:
        clean, _, deg = _multi_fixture(n)
        dets = detect_pulses(deg)
        restored, _ = restore_signal(deg, dets, RestoreConfig(kind="gp", excerpt_len=2000, fade_len=250, seed=0))
        gains.append(snr_db(clean, restored) - snr_db(clean, deg))
    ok = min(gains) >= 6.0
    record(7, ok, "GP gain " + ", ".join(f"{n} pulses {g:+.1f} dB" for n, g in zip(PULSE_COUNTS, gains))
           + " (>= +6 dB each)")
    assert ok


def test_criterion_08_sigma_d2_marginal():
    rng = np.random.default_rng(108)
    y1 = np.sqrt(0.5) * rng.standard_normal(10)
    x1 = 0.02 * rng.standard_normal(10)
    draws = np.array([sigma_d2_step(y1, x1, rng) for _ in range(100_000)])
    a = 1e-4 + 5.0
    b = 1e-4 + 0.5 * float(np.sum((y1 - x1) ** 2))
    ks = stats.kstest(draws, stats.invgamma(a, scale=b).cdf).statistic
    ok = ks < 0.02
    record(8, ok, f"1e5 draws, KS statistic {ks:.4f} (< 0.02)")
    assert ok


def test_criterion_09_determinism(tmp_path):
    clean = ar_signal(0.5, seed=1)
    deg = inject_pulse(clean, uniform_pulses(1, len(clean), 1400, params=SHORT_TAIL, margin=5000, seed=1))
    write_wav(tmp_path / "in.wav", deg)
    (tmp_path / "cfg.ini").write_text("[restore]\nexcerpt_len = 2000\nfade_len = 250\n")
    blobs = []
    for k in range(2):
        code = main(["restore", str(tmp_path / "in.wav"), str(tmp_path / f"out{k}.wav"), "--seed", "42",
                     "--config", str(tmp_path / "cfg.ini"), "--dump-chain", str(tmp_path / f"chain{k}.csv")])
        assert code == 0
        blobs.append(((tmp_path / f"out{k}.wav").read_bytes(), (tmp_path / f"chain{k}.csv").read_bytes()))
    ok = blobs[0] == blobs[1]
    record(9, ok, "two runs with seed 42: restored WAV and chain CSV bit-identical" if ok
           else "outputs differ between identical-seed runs")
    assert ok


def test_criterion_10_peaq_not_reproducible():
    record(10, None, "perceptual (PEAQ) comparisons are not reproducible here; SNR and coverage criteria substitute")
    pytest.skip("PEAQ scoring is out of scope")
