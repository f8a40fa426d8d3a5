"""Experiment orchestration: replica sweeps, Monte-Carlo decoding campaigns,
SRC-ablation trajectories, F-formula checks, and CSV/JSON emission.

Reproducibility contract: trial i of a sweep uses the RNG stream derived
from (master_seed, i) with i enumerated globally over (ensemble, snr,
trial); reruns with the same config and master seed produce byte-identical
CSV bytes (the JSON sidecar carries the only timestamp).
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .decoder import DecodeOptions, decode, decode_wbes_gaussian
from .ensemble import make_instance
from .errors import DomainError
from .models import BinaryPrior, channel_from_config, prior_from_config, GaussianChannel
from .replica import predict, qfunc, solve_rs_branches, RSOptions
from .rmt import eval_F, f_partials
from .spectra import Spectrum, make_marchenko_pastur, make_wbes

__all__ = [
    "ExperimentConfig",
    "SweepRow",
    "snr_db_to_sigma2",
    "run_decode_sweep",
    "run_replica_sweep",
    "run_trajectory",
    "run_fcheck",
    "run_spectrum_report",
    "write_trajectory_csv",
]


def snr_db_to_sigma2(snr_db: float) -> float:
    """SNR(dB) = -10 log10(2 sigma^2)."""
    return 10.0 ** (-snr_db / 10.0) / 2.0


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


@dataclass
class ExperimentConfig:
    experiment: str = "decode_sweep"
    ensembles: list = field(default_factory=lambda: ["wbes", "basic"])
    beta: float = 1.1
    K: int = 550
    snr_grid_db: list = field(default_factory=lambda: [2.0, 4.0, 6.0, 8.0, 10.0])
    trials: int = 200
    master_seed: int = 20240601
    prior: dict = field(default_factory=lambda: {"kind": "binary"})
    decoder: dict = field(default_factory=dict)
    decoder_overrides: dict = field(default_factory=dict)
    trajectory_betas: list = field(default_factory=lambda: [1.5, 1.6])
    trajectory_iters: int = 50
    trajectory_snr_db: float = 6.0
    full_scale: dict = field(default_factory=lambda: {"K": 2048, "trials": 500})
    fcheck: dict = field(default_factory=dict)
    spectrum: dict = field(default_factory=dict)
    emit_gnuplot: bool = False
    out_dir: str = "results"

    def __post_init__(self):
        if self.trials < 1:
            raise DomainError("trials must be >= 1")
        if not all(math.isfinite(s) for s in self.snr_grid_db):
            raise DomainError("snr grid must be finite")

    @property
    def N(self) -> int:
        return round(self.K / self.beta)

    @property
    def realized_beta(self) -> float:
        return self.K / self.N

    @staticmethod
    def from_file(path, overrides: dict | None = None) -> "ExperimentConfig":
        doc = json.loads(Path(path).read_text())
        if overrides:
            doc.update(overrides)
        known = {f.name for f in dataclasses.fields(ExperimentConfig)}
        unknown = set(doc) - known
        if unknown:
            raise DomainError(f"unknown config keys: {sorted(unknown)}")
        return ExperimentConfig(**doc)

    def apply_full_scale(self) -> "ExperimentConfig":
        cfg = dataclasses.replace(self)
        cfg.K = int(self.full_scale.get("K", self.K))
        cfg.trials = int(self.full_scale.get("trials", self.trials))
        return cfg


@dataclass
class SweepRow:
    snr_db: float
    sigma2: float
    ensemble: str
    ber_mean: float
    ber_stderr: float
    replica_ber: float
    trials: int
    K: int
    N: int
    seed: int
    diverged_count: int = 0
    converged_count: int = 0

    HEADER = ("snr_db,sigma2,ensemble,ber_mean,ber_stderr,replica_ber,"
              "trials,K,N,seed,diverged_count,converged_count")

    def csv(self) -> str:
        vals = [self.snr_db, self.sigma2, self.ensemble, self.ber_mean,
                self.ber_stderr, self.replica_ber, self.trials, self.K,
                self.N, self.seed, self.diverged_count, self.converged_count]
        return ",".join(_fmt(v) for v in vals)


def _n_workers() -> int:
    env = os.environ.get("SPECCHAN_THREADS")
    if env:
        return max(1, int(env))
    return min(8, os.cpu_count() or 1)


def _decode_opts(cfg: ExperimentConfig, ensemble: str) -> DecodeOptions:
    base = dict(cfg.decoder)
    base.update(cfg.decoder_overrides.get(ensemble, {}))
    return DecodeOptions(
        max_iter=int(base.get("max_iter", 200)),
        tol=float(base.get("tol", 1e-8)),
        src=bool(base.get("src", True)),
        damping=float(base.get("damping", 0.0)),
        init_mode=str(base.get("init_mode", "paper_fig1")),
    )


def _sweep_trial(args):
    (master_seed, trial_index, ensemble, N, K, sigma2, prior_cfg, opts_dict) = args
    prior = prior_from_config(prior_cfg)
    channel = GaussianChannel(sigma2)
    seed = int(np.random.SeedSequence((master_seed, trial_index)).generate_state(1)[0])
    inst = make_instance(ensemble, N, K, prior, channel, seed=seed)
    opts = DecodeOptions(**opts_dict)
    if ensemble == "wbes" and isinstance(prior, BinaryPrior):
        res = decode_wbes_gaussian(inst.H, inst.y, inst.beta, sigma2, opts)
    else:
        spec = inst.empirical_spectrum()
        res = decode(inst.H, inst.y, spec, prior, channel, opts, x_true=inst.x_true)
    errors = int(np.sum(res.bits != np.sign(inst.x_true)))
    return trial_index, errors, res.converged, res.diverged


def _asymptotic_spectrum(ensemble: str, beta: float) -> Spectrum:
    if ensemble == "wbes":
        return make_wbes(beta)
    if ensemble == "basic":
        return make_marchenko_pastur(beta)
    raise DomainError(f"unknown ensemble {ensemble!r}")


def run_decode_sweep(cfg: ExperimentConfig, out_dir=None):
    """Monte-Carlo BER sweep with replica predictions and the scalar
    Gaussian baseline Q(1/sigma); returns (rows, csv_path, sidecar_path)."""
    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prior = prior_from_config(cfg.prior)
    N, K = cfg.N, cfg.K
    rows: list[SweepRow] = []
    futures = []
    jobs = []
    for e_idx, ensemble in enumerate(cfg.ensembles):
        opts = _decode_opts(cfg, ensemble)
        for s_idx, snr in enumerate(cfg.snr_grid_db):
            sigma2 = snr_db_to_sigma2(snr)
            for t in range(cfg.trials):
                gidx = (e_idx * len(cfg.snr_grid_db) + s_idx) * cfg.trials + t
                jobs.append((cfg.master_seed, gidx, ensemble, N, K, sigma2,
                             cfg.prior, dataclasses.asdict(opts)))
    workers = _n_workers()
    results = {}
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for gidx, errors, conv, div in pool.map(_sweep_trial, jobs, chunksize=4):
                results[gidx] = (errors, conv, div)
    else:
        for job in jobs:
            gidx, errors, conv, div = _sweep_trial(job)
            results[gidx] = (errors, conv, div)

    for e_idx, ensemble in enumerate(cfg.ensembles):
        spec = _asymptotic_spectrum(ensemble, cfg.realized_beta)
        for s_idx, snr in enumerate(cfg.snr_grid_db):
            sigma2 = snr_db_to_sigma2(snr)
            channel = GaussianChannel(sigma2)
            fps = solve_rs_branches(spec, prior, channel)
            replica_ber = qfunc(math.sqrt(max(fps[0].q_hat_x, 0.0)))
            bers = []
            div_count = conv_count = 0
            for t in range(cfg.trials):
                gidx = (e_idx * len(cfg.snr_grid_db) + s_idx) * cfg.trials + t
                errors, conv, div = results[gidx]
                if div:
                    div_count += 1
                    continue
                conv_count += conv
                bers.append(errors / K)
            bers = np.asarray(bers)
            mean = float(bers.mean()) if len(bers) else math.nan
            stderr = float(bers.std(ddof=1) / math.sqrt(len(bers))) if len(bers) > 1 else 0.0
            rows.append(SweepRow(snr, sigma2, ensemble, mean, stderr, replica_ber,
                                 cfg.trials, K, N, cfg.master_seed, div_count, conv_count))
    # scalar Gaussian baseline rows
    for snr in cfg.snr_grid_db:
        sigma2 = snr_db_to_sigma2(snr)
        ber = qfunc(1.0 / math.sqrt(sigma2))
        rows.append(SweepRow(snr, sigma2, "scalar", ber, 0.0, ber, 0, K, N,
                             cfg.master_seed, 0, 0))

    csv_path = out / "decode_sweep.csv"
    _write_csv(csv_path, SweepRow.HEADER, [r.csv() for r in rows])
    sidecar = _write_sidecar(out / "decode_sweep.json", cfg)
    if cfg.emit_gnuplot:
        _emit_sweep_gnuplot(out / "decode_sweep.gp", csv_path.name)
    return rows, csv_path, sidecar


def run_replica_sweep(cfg: ExperimentConfig, out_dir=None):
    """RSPrediction per SNR per ensemble, all branches reported."""
    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prior = prior_from_config(cfg.prior)
    header = ("snr_db,sigma2,ensemble,q_x,q_hat_x,free_energy,mutual_info,"
              "ber,mse,residual,branch_id")
    lines = []
    records = []
    for ensemble in cfg.ensembles:
        spec = _asymptotic_spectrum(ensemble, cfg.realized_beta)
        for snr in cfg.snr_grid_db:
            sigma2 = snr_db_to_sigma2(snr)
            channel = GaussianChannel(sigma2)
            for fp in solve_rs_branches(spec, prior, channel):
                pr = predict(fp, spec, prior, channel)
                ber = pr.ber if pr.ber is not None else math.nan
                rec = dict(snr_db=snr, sigma2=sigma2, ensemble=ensemble, q_x=fp.q_x,
                           q_hat_x=fp.q_hat_x, free_energy=pr.free_energy,
                           mutual_info=pr.mutual_info, ber=ber, mse=pr.mse,
                           residual=fp.residual, branch_id=fp.branch_id)
                records.append(rec)
                lines.append(",".join(_fmt(rec[k]) for k in header.split(",")))
    csv_path = out / "replica_sweep.csv"
    _write_csv(csv_path, header, lines)
    sidecar = _write_sidecar(out / "replica_sweep.json", cfg)
    return records, csv_path, sidecar


def _trajectory_trial(args):
    (master_seed, gidx, N, K, sigma2, n_iter, src) = args
    prior = BinaryPrior()
    channel = GaussianChannel(sigma2)
    seed = int(np.random.SeedSequence((master_seed, gidx)).generate_state(1)[0])
    inst = make_instance("wbes", N, K, prior, channel, seed=seed)
    opts = DecodeOptions(max_iter=n_iter, tol=0.0, src=src,
                         init_mode="matched_filter", record_trajectory=True)
    res = decode_wbes_gaussian(inst.H, inst.y, inst.beta, sigma2, opts, x_true=inst.x_true)
    return gidx, [row.ber for row in res.trajectory]


def plateau_hit_iteration(bers, factor: float = 1.05) -> int:
    """First iteration from which the trajectory stays within factor x its
    final (plateau) value."""
    plateau = bers[-1]
    level = factor * plateau
    t_hit = len(bers) - 1
    for t in range(len(bers) - 1, -1, -1):
        if bers[t] <= level:
            t_hit = t
        else:
            break
    return t_hit


def run_trajectory(cfg: ExperimentConfig, out_dir=None):
    """SRC-on vs No-SRC mean BER trajectories from the matched-filter start
    (WBES, Gaussian channel, binary prior). Emits one row per (beta,
    variant, iteration) plus a summary with plateau statistics."""
    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sigma2 = snr_db_to_sigma2(cfg.trajectory_snr_db)
    n_iter = cfg.trajectory_iters
    header = "beta,variant,t,ber_mean,ber_stderr,trials"
    lines = []
    summary = {}
    workers = _n_workers()
    for b_idx, beta in enumerate(cfg.trajectory_betas):
        N = round(cfg.K / beta)
        per_variant = {}
        for v_idx, (variant, src) in enumerate((("src_on", True), ("no_src", False))):
            jobs = []
            for t in range(cfg.trials):
                # same instance stream for both variants: gidx keyed by trial
                gidx = b_idx * cfg.trials + t
                jobs.append((cfg.master_seed, gidx, N, cfg.K, sigma2, n_iter, src))
            trajs = {}
            if workers > 1 and len(jobs) > 1:
                with ProcessPoolExecutor(max_workers=workers) as pool:
                    for gidx, bers in pool.map(_trajectory_trial, jobs, chunksize=2):
                        trajs[gidx] = bers
            else:
                for job in jobs:
                    gidx, bers = _trajectory_trial(job)
                    trajs[gidx] = bers
            arr = np.array([trajs[b_idx * cfg.trials + t] for t in range(cfg.trials)])
            mean = arr.mean(axis=0)
            se = arr.std(axis=0, ddof=1) / math.sqrt(cfg.trials)
            for t in range(arr.shape[1]):
                lines.append(",".join(_fmt(v) for v in
                                      (beta, variant, t, float(mean[t]), float(se[t]), cfg.trials)))
            hits = [plateau_hit_iteration(list(row)) for row in arr]
            per_variant[variant] = {
                "final_ber_mean": float(mean[-1]),
                "final_ber_stderr": float(se[-1]),
                "init_ber_mean": float(mean[0]),
                "mean_plateau_hit_iter": float(np.mean(hits)),
                "median_plateau_hit_iter": float(np.median(hits)),
            }
        on, off = per_variant["src_on"], per_variant["no_src"]
        joint_se = math.hypot(on["final_ber_stderr"], off["final_ber_stderr"])
        summary[str(beta)] = {
            **{f"src_on.{k}": v for k, v in on.items()},
            **{f"no_src.{k}": v for k, v in off.items()},
            "final_diff": off["final_ber_mean"] - on["final_ber_mean"],
            "joint_stderr": joint_se,
        }
    csv_path = out / "trajectory.csv"
    _write_csv(csv_path, header, lines)
    sidecar = _write_sidecar(out / "trajectory.json", cfg, extra={"summary": summary})
    if cfg.emit_gnuplot:
        _emit_trajectory_gnuplot(out / "trajectory.gp", csv_path.name)
    return summary, csv_path, sidecar


def run_fcheck(cfg: ExperimentConfig, out_dir=None):
    """F-formula verification: the IID-Gaussian identity on the MP grid,
    boundary/small-coupling behaviour, envelope consistency, and the WBES
    Haar Monte-Carlo cross-check. Returns (ok, report)."""
    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    opts = cfg.fcheck
    betas = opts.get("betas", [0.5, 1.1, 2.0])
    grid = np.round(np.arange(0.1, 1.05, 0.1), 10)
    report = {"checks": []}
    ok = True

    def check(name, passed, detail):
        nonlocal ok
        ok = ok and bool(passed)
        report["checks"].append({"name": name, "passed": bool(passed), "detail": detail})
        print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")

    worst = 0.0
    for beta in betas:
        mp = make_marchenko_pastur(beta)
        for xi in grid:
            for eta in grid:
                err = abs(eval_F(mp, float(xi), float(eta)).value + beta / 2.0 * xi * eta)
                worst = max(worst, err)
    check("mp_identity_grid", worst < 1e-6, f"worst |F + (b/2) xi eta| = {worst:.3e}")

    w = make_wbes(1.1)
    b1 = abs(eval_F(w, 0.4, 1e-8).value)
    b2 = abs(eval_F(w, 1e-8, 0.7).value)
    check("boundary", max(b1, b2) < 1e-4, f"|F| at eta/xi=1e-8: {b1:.3e}, {b2:.3e}")

    ratios = []
    for k in (2, 3, 4):
        s = 10.0 ** (-2 * k)
        val = eval_F(w, 10.0 ** -k, 10.0 ** -k).value
        ratios.append(abs(val + 1.1 / 2.0 * w.mean * s) / s)
    check("small_coupling", ratios[0] > ratios[-1] and ratios[-1] < 1e-3,
          f"(F + (b/2)<lam> s)/s at s=1e-4,1e-6,1e-8: {ratios}")

    env_worst = 0.0
    for (xi, eta) in ((0.4, 0.3), (0.2, 0.5), (0.7, 0.1)):
        h = 1e-6
        r = eval_F(w, xi, eta)
        num = (eval_F(w, xi + h, eta).value - eval_F(w, xi - h, eta).value) / (2 * h)
        env = 1.1 * r.saddle.lambda_xi / 2.0 - 1.1 / (2.0 * xi)
        nume = (eval_F(w, xi, eta + h).value - eval_F(w, xi, eta - h).value) / (2 * h)
        enve = r.saddle.lambda_eta / 2.0 - 1.0 / (2.0 * eta)
        env_worst = max(env_worst, abs(num - env), abs(nume - enve))
    check("envelope", env_worst < 1e-6, f"worst |numeric - envelope| = {env_worst:.3e}")

    mc = _mc_haar_check(cfg.master_seed)
    for name, (est, se, pred) in mc.items():
        check(f"mc_haar_{name}", abs(est - pred) <= 3.0 * se,
              f"MC {est:.6f} +- {se:.6f} vs exp(N F) = {pred:.6f}")

    report["ok"] = ok
    (out / "fcheck.json").write_text(json.dumps(report, indent=2))
    return ok, report


def _mc_haar_check(master_seed: int, N: int = 500, K: int = 550, n_samples: int = 10_000):
    """Estimate E cos(u^T H x) over Haar pairs for WBES and compare with
    exp(N F(xi, eta)). The (0.5, 0.2) point has exp(N F) ~ e^-29 (the check
    is then one-sided); (0.2, 0.02) actually resolves the formula."""
    rng = np.random.default_rng(np.random.SeedSequence((master_seed, 987654321)))
    beta = K / N
    w = make_wbes(beta)
    out = {}
    for tag, xi, eta in (("resolvable", 0.2, 0.02), ("spec_point", 0.5, 0.2)):
        c = math.sqrt(N * eta * K * xi * beta)
        a = rng.standard_normal((n_samples, N))
        a /= np.linalg.norm(a, axis=1, keepdims=True)
        b = rng.standard_normal((n_samples, K))
        b /= np.linalg.norm(b, axis=1, keepdims=True)
        dot = np.einsum("ij,ij->i", a, b[:, :N])
        vals = np.cos(c * dot)
        est = float(vals.mean())
        se = float(vals.std(ddof=1) / math.sqrt(n_samples))
        pred = float(np.exp(N * eval_F(w, xi, eta).value))
        out[tag] = (est, se, pred)
    return out


def run_spectrum_report(cfg: ExperimentConfig, out_dir=None):
    """Build the configured spectrum, report moments, and round-trip JSON."""
    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    kind = cfg.spectrum.get("kind", "wbes")
    beta = float(cfg.spectrum.get("beta", cfg.beta))
    spec = _asymptotic_spectrum("wbes" if kind == "wbes" else "basic", beta)
    roundtrip = Spectrum.from_json(spec.to_json())
    rep = {
        "kind": kind,
        "beta": beta,
        "total_mass": spec.total_mass(),
        "mass_at_zero": spec.mass_at_zero(),
        "mean": spec.mean,
        "second_moment": spec.average(lambda lam: lam**2),
        "atoms": [[m, loc] for m, loc in spec.atoms],
        "roundtrip_mean_error": abs(roundtrip.mean - spec.mean),
    }
    (out / "spectrum_report.json").write_text(json.dumps(rep, indent=2))
    for k, v in rep.items():
        print(f"{k}: {v}")
    return rep


def write_trajectory_csv(result, path) -> Path:
    """Per-run trajectory CSV: t, ber, chi_x, chi_u, lambda_x, chi_hat_x,
    chi_hat_u, max_delta."""
    if result.trajectory is None:
        raise DomainError("decode was run without record_trajectory")
    header = "t,ber,chi_x,chi_u,lambda_x,chi_hat_x,chi_hat_u,max_delta"
    lines = []
    for row in result.trajectory:
        ber = row.ber if row.ber is not None else math.nan
        lines.append(",".join(_fmt(v) for v in
                              (row.t, ber, row.chi_x, row.chi_u, row.lambda_x,
                               row.chi_hat_x, row.chi_hat_u, row.max_delta)))
    path = Path(path)
    _write_csv(path, header, lines)
    return path


# -- output helpers -----------------------------------------------------------


def _write_csv(path: Path, header: str, lines: list[str]) -> None:
    path.write_text(header + "\n" + "\n".join(lines) + "\n")


def _write_sidecar(path: Path, cfg: ExperimentConfig, extra: dict | None = None) -> Path:
    doc = {
        "config": dataclasses.asdict(cfg),
        "realized_beta": cfg.realized_beta,
        "N": cfg.N,
        "master_seed": cfg.master_seed,
        "version": __version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    if extra:
        doc.update(extra)
    path.write_text(json.dumps(doc, indent=2))
    return path


def _emit_sweep_gnuplot(path: Path, csv_name: str) -> None:
    path.write_text(f"""set datafile separator ','
set logscale y
set xlabel 'SNR (dB)'
set ylabel 'BER'
set key bottom left
plot '{csv_name}' using 1:($3 eq 'scalar' ? $4 : 1/0) with lines title 'scalar', \\
     '' using 1:($3 eq 'wbes' ? $6 : 1/0) with lines title 'WBES (replica)', \\
     '' using 1:($3 eq 'basic' ? $6 : 1/0) with lines title 'BASIC (replica)', \\
     '' using 1:($3 eq 'wbes' ? $4 : 1/0):5 with yerrorbars title 'WBES (decoder)', \\
     '' using 1:($3 eq 'basic' ? $4 : 1/0):5 with yerrorbars title 'BASIC (decoder)'
""")


def _emit_trajectory_gnuplot(path: Path, csv_name: str) -> None:
    path.write_text(f"""set datafile separator ','
set logscale y
set xlabel 'iteration'
set ylabel 'BER'
plot '{csv_name}' using 3:($2 eq 'src_on' ? $4 : 1/0) with linespoints title 'SRC', \\
     '' using 3:($2 eq 'no_src' ? $4 : 1/0) with linespoints title 'No SRC'
""")
