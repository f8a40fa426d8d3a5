"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` (or the full suite). The
two Monte-Carlo reproductions (criteria 6 and 7) honour SPECCHAN_THREADS.
"""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from specchan.decoder import DecodeOptions, decode, decode_wbes_gaussian, h_step, init, v_step
from specchan.ensemble import make_instance, sample_haar_orthogonal
from specchan.harness import ExperimentConfig, run_decode_sweep, run_trajectory, snr_db_to_sigma2
from specchan.models import BinaryPrior, GaussianChannel, GaussianPrior
from specchan.replica import qfunc, solve_rs, verify_annealed, RSOptions
from specchan.rmt import eval_F
from specchan.spectra import make_marchenko_pastur, make_wbes

pytestmark = pytest.mark.acceptance

_REPORT: list[str] = []


def _record(name: str, passed: bool, detail: str):
    line = f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}"
    _REPORT.append(line)
    print("\n" + line)
    assert passed, line


# -- criterion 1 --------------------------------------------------------------


def test_criterion_1_f_identity_grid():
    t0 = time.time()
    worst = 0.0
    grid = np.round(np.arange(0.1, 1.05, 0.1), 12)
    for beta in (0.5, 1.1, 2.0):
        spec = make_marchenko_pastur(beta)
        for xi in grid:
            for eta in grid:
                err = abs(eval_F(spec, float(xi), float(eta)).value + beta / 2.0 * xi * eta)
                worst = max(worst, err)
    dt = time.time() - t0
    _record("criterion 1 (F identity grid)", worst < 1e-6 and dt < 10.0,
            f"worst error {worst:.3e} (< 1e-6), runtime {dt:.1f}s (< 10s)")


# -- criterion 2 --------------------------------------------------------------


def test_criterion_2_f_properties():
    t0 = time.time()
    spec = make_wbes(1.1)
    b1 = abs(eval_F(spec, 0.4, 1e-8).value)
    b2 = abs(eval_F(spec, 1e-8, 0.6).value)
    boundary_ok = max(b1, b2) < 1e-4

    ratios = []
    for k in (2, 3, 4):
        s = 10.0 ** (-2 * k)
        ratios.append(abs(eval_F(spec, 10.0**-k, 10.0**-k).value + 1.1 / 2 * spec.mean * s) / s)
    small_ok = ratios[2] < ratios[0] and ratios[2] < 1e-6

    env_worst = 0.0
    resid_worst = 0.0
    h = 1e-6
    for xi, eta in ((0.4, 0.3), (0.2, 0.5), (0.7, 0.1)):
        r = eval_F(spec, xi, eta)
        resid_worst = max(resid_worst, r.residual)
        num = (eval_F(spec, xi + h, eta).value - eval_F(spec, xi - h, eta).value) / (2 * h)
        env = 1.1 * r.saddle.lambda_xi / 2 - 1.1 / (2 * xi)
        nume = (eval_F(spec, xi, eta + h).value - eval_F(spec, xi, eta - h).value) / (2 * h)
        enve = r.saddle.lambda_eta / 2 - 1.0 / (2 * eta)
        env_worst = max(env_worst, abs(num - env), abs(nume - enve))
    dt = time.time() - t0
    _record("criterion 2 (F boundary/small-coupling/envelope/residual)",
            boundary_ok and small_ok and env_worst < 1e-6 and resid_worst < 1e-10 and dt < 5.0,
            f"boundary {max(b1, b2):.2e}, ratio@1e-8 {ratios[2]:.2e}, envelope {env_worst:.2e}, "
            f"residual {resid_worst:.2e}, runtime {dt:.1f}s")


# -- criterion 3 --------------------------------------------------------------


def test_criterion_3_annealed_saddle():
    t0 = time.time()
    worst = 0.0
    channel = GaussianChannel(0.1)
    for spec, label in ((make_wbes(1.1), "wbes1.1"), (make_wbes(2.0), "wbes2"),
                        (make_marchenko_pastur(0.5), "mp0.5"), (make_marchenko_pastur(2.0), "mp2")):
        for prior in (BinaryPrior(), GaussianPrior(1.7)):
            T_x = prior.second_moment
            t_x, t_hat_x, t_u, t_hat_u = verify_annealed(spec, prior, channel)
            worst = max(worst, abs(t_x - T_x), abs(t_hat_x), abs(t_u),
                        abs(t_hat_u - spec.beta * spec.mean * T_x))
    dt = time.time() - t0
    _record("criterion 3 (annealed saddle)", worst < 1e-8 and dt < 5.0,
            f"worst deviation {worst:.3e} (< 1e-8), runtime {dt:.1f}s")


# -- criterion 4 --------------------------------------------------------------


def test_criterion_4_gaussian_structure():
    s2 = snr_db_to_sigma2(6.0)
    prior, ch = BinaryPrior(), GaussianChannel(s2)
    inst = make_instance("wbes", 58, 64, prior, ch, seed=21)
    spec = make_wbes(64 / 58)
    st = init(inst.H, inst.y, prior, ch)
    lam_u_worst = 0.0
    for _ in range(25):
        h_step(st, inst.H, inst.y, spec, ch)
        lam_u_worst = max(lam_u_worst, abs(st.lambda_u - s2))
        v_step(st, inst.H, spec, prior)

    N, K = 116, 128
    inst2 = make_instance("wbes", N, K, prior, ch, seed=7)
    opts = DecodeOptions(max_iter=20, tol=0.0)
    a = decode(inst2.H, inst2.y, make_wbes(K / N), prior, ch, opts)
    b = decode_wbes_gaussian(inst2.H, inst2.y, K / N, s2, opts)
    dual = float(np.abs(a.m_x_final - b.m_x_final).max())
    _record("criterion 4 (Gaussian channel structure)",
            lam_u_worst < 1e-14 and dual < 1e-12,
            f"max|lambda_u - sigma2| = {lam_u_worst:.2e} (machine), "
            f"dual-path max diff {dual:.2e} (< 1e-12)")


# -- criterion 5 --------------------------------------------------------------


def test_criterion_5_wbes_and_haar_construction():
    rng = np.random.default_rng(1234)
    prior, ch = BinaryPrior(), GaussianChannel(0.1)
    inst = make_instance("wbes", 500, 550, prior, ch, seed=77)
    wbes_err = float(np.abs(inst.H @ inst.H.T - (550 / 500) * np.eye(500)).max())
    n = 200
    q = sample_haar_orthogonal(n, rng)
    orth_err = float(np.abs(q.T @ q - np.eye(n)).max())
    _record("criterion 5 (WBES/Haar construction)",
            wbes_err < 1e-10 and orth_err < 1e-12 * n,
            f"||HH^T - beta I||_max = {wbes_err:.2e} (< 1e-10), "
            f"||Q^T Q - I||_max = {orth_err:.2e} (< {1e-12 * n:.0e})")


# -- criterion 6 --------------------------------------------------------------


def test_criterion_6_fig2_desk_scale():
    t0 = time.time()
    cfg = ExperimentConfig.from_file(Path(__file__).parent.parent / "configs" / "fig2_desk.json")
    rows, _, _ = run_decode_sweep(cfg, out_dir="results/acceptance_fig2")
    dt = time.time() - t0

    by = {(r.ensemble, r.snr_db): r for r in rows}
    agree_ok = True
    detail = []
    for ensemble in ("wbes", "basic"):
        for snr in cfg.snr_grid_db:
            r = by[(ensemble, snr)]
            # sample stderr with an exact-binomial floor at the replica rate:
            # with ~0 observed errors the sample estimate degenerates
            floor = math.sqrt(r.replica_ber * (1 - r.replica_ber) / (cfg.trials * cfg.K))
            se = max(r.ber_stderr, floor)
            gap = abs(r.ber_mean - r.replica_ber)
            ok = gap <= 3.0 * se and r.diverged_count == 0
            agree_ok = agree_ok and ok
            detail.append(f"{ensemble}@{snr:g}dB gap/se={gap / se:.2f}")
    order_ok = True
    for snr in cfg.snr_grid_db:
        scalar = by[("scalar", snr)].replica_ber
        wb = by[("wbes", snr)].replica_ber
        ba = by[("basic", snr)].replica_ber
        order_ok = order_ok and (scalar < wb < ba)
    scalar6 = by[("scalar", 6.0)].ber_mean
    scalar_ok = abs(scalar6 - 0.00239) < 1e-5
    runtime_ok = dt < 15 * 60
    _record("criterion 6 (Fig. 2 desk scale)",
            agree_ok and order_ok and scalar_ok and runtime_ok,
            f"3SE agreement at all 10 points ({'; '.join(detail)}); replica ordering "
            f"scalar<WBES<BASIC at every SNR: {order_ok}; scalar@6dB={scalar6:.5f}; "
            f"runtime {dt:.0f}s")


# -- criterion 7 --------------------------------------------------------------


def test_criterion_7_fig3_src_ablation():
    t0 = time.time()
    cfg = ExperimentConfig.from_file(Path(__file__).parent.parent / "configs" / "fig3.json")
    summary, _, sidecar = run_trajectory(cfg, out_dir="results/acceptance_fig3")
    dt = time.time() - t0

    s15 = summary["1.5"]
    eq_15 = abs(s15["final_diff"]) <= 3.0 * s15["joint_stderr"]
    faster_15 = s15["no_src.mean_plateau_hit_iter"] < s15["src_on.mean_plateau_hit_iter"]
    s16 = summary["1.6"]
    worse_16 = s16["final_diff"] > 3.0 * s16["joint_stderr"]
    runtime_ok = dt < 10 * 60
    _record("criterion 7 (Fig. 3 SRC ablation)",
            eq_15 and faster_15 and worse_16 and runtime_ok,
            f"beta=1.5: |diff|={abs(s15['final_diff']):.5f} <= 3*{s15['joint_stderr']:.5f}, "
            f"plateau iters no-SRC {s15['no_src.mean_plateau_hit_iter']:.1f} < "
            f"SRC {s15['src_on.mean_plateau_hit_iter']:.1f}; "
            f"beta=1.6: diff={s16['final_diff']:.5f} > 3*{s16['joint_stderr']:.5f}; "
            f"runtime {dt:.0f}s")


# -- criterion 8 --------------------------------------------------------------


def test_criterion_8_oracle_equivalence():
    oracle = json.loads((Path(__file__).parent / "oracles" / "rs_oracle.json").read_text())
    fp = solve_rs(make_wbes(oracle["beta"]), BinaryPrior(), GaussianChannel(oracle["sigma2"]))
    dq = abs(fp.q_x - oracle["q_x"])
    dqh = abs(fp.q_hat_x - oracle["q_hat_x"])

    rng = np.random.default_rng(31337)
    n = 10_000_000
    errs = 0
    for _ in range(10):
        z = math.sqrt(fp.q_hat_x) + rng.standard_normal(n // 10)
        errs += int(np.count_nonzero(z < 0))
    p_hat = errs / n
    se = math.sqrt(p_hat * (1 - p_hat) / n)
    ber = qfunc(math.sqrt(fp.q_hat_x))
    _record("criterion 8 (grid-search oracle + scalar-channel MC)",
            dq < 1e-6 and dqh < 1e-6 and abs(ber - p_hat) <= 3 * se,
            f"|dq_x|={dq:.2e}, |dq_hat|={dqh:.2e} (< 1e-6); "
            f"BER {ber:.6f} vs MC {p_hat:.6f} +- {se:.6f}")


# -- criterion 9 --------------------------------------------------------------


def test_criterion_9_determinism(tmp_path):
    base = dict(ensembles=["wbes", "basic"], beta=1.1, K=66, snr_grid_db=[4.0, 8.0],
                trials=5, master_seed=20249999)
    _, p1, _ = run_decode_sweep(ExperimentConfig(**base, out_dir=str(tmp_path / "r1")))
    _, p2, _ = run_decode_sweep(ExperimentConfig(**base, out_dir=str(tmp_path / "r2")))
    identical = p1.read_bytes() == p2.read_bytes()
    _record("criterion 9 (determinism)", identical,
            "reruns with the same master seed are byte-identical")


def test_zz_report():
    print("\n" + "=" * 72)
    for line in _REPORT:
        print(line)
    print("=" * 72)
