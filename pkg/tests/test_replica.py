import json
import math
from pathlib import Path

import numpy as np
import pytest

from specchan.errors import ConsistencyError, UnsupportedError
from specchan.models import BinaryPrior, GaussianChannel, GaussianPrior, TabulatedPrior
from specchan.replica import (
    RSOptions,
    ber_from_fixed_point,
    overlap_from_qhat,
    predict,
    prior_mixture_entropy,
    qfunc,
    solve_rs,
    solve_rs_branches,
    verify_annealed,
)
from specchan.spectra import make_marchenko_pastur, make_wbes

ORACLE = json.loads((Path(__file__).parent / "oracles" / "rs_oracle.json").read_text())
SNR6 = 10.0 ** (-0.6) / 2.0


def test_low_snr_limit():
    fp = solve_rs(make_wbes(1.1), BinaryPrior(), GaussianChannel(1e6))
    assert fp.q_x < 1e-4
    assert fp.q_hat_x < 1e-4


def test_noiseless_limit():
    fp = solve_rs(make_wbes(1.1), BinaryPrior(), GaussianChannel(1e-6),
                  RSOptions(max_iter=5000))
    assert abs(fp.q_x - 1.0) < 1e-3
    assert qfunc(math.sqrt(fp.q_hat_x)) < 1e-6


def test_grid_oracle_agreement():
    fp = solve_rs(make_wbes(ORACLE["beta"]), BinaryPrior(), GaussianChannel(ORACLE["sigma2"]))
    assert abs(fp.q_x - ORACLE["q_x"]) < 1e-6
    assert abs(fp.q_hat_x - ORACLE["q_hat_x"]) < 1e-6


def test_ber_scalar_channel_monte_carlo():
    """BER = Q(sqrt(qhat)) against the scalar equivalent channel
    z = sqrt(qhat) x0 + n sampled with 1e7 draws."""
    fp = solve_rs(make_wbes(1.1), BinaryPrior(), GaussianChannel(SNR6))
    qhat = fp.q_hat_x
    rng = np.random.default_rng(808)
    n = 10_000_000
    errs = 0
    for chunk in range(10):
        z = math.sqrt(qhat) + rng.standard_normal(n // 10)
        errs += int(np.count_nonzero(z < 0))
    p_hat = errs / n
    se = math.sqrt(p_hat * (1 - p_hat) / n)
    assert abs(qfunc(math.sqrt(qhat)) - p_hat) <= 3 * se


def test_predict_gaussian_entropy_term():
    ch = GaussianChannel(0.1)
    assert ch.output_entropy_term(1.1) == pytest.approx(-0.5 * math.log(2 * math.pi * math.e * 0.1),
                                                        abs=1e-12)
    assert ch.output_entropy_term(1.1) == pytest.approx(-0.2676458, abs=1e-6)


def test_predict_values_and_bounds():
    spec = make_wbes(1.1)
    prior = BinaryPrior()
    ch = GaussianChannel(SNR6)
    fp = solve_rs(spec, prior, ch)
    pr = predict(fp, spec, prior, ch)
    assert pr.ber == pytest.approx(qfunc(math.sqrt(fp.q_hat_x)), abs=1e-12)
    assert pr.mse == pytest.approx(1.0 - fp.q_x, abs=1e-12)
    assert 0.0 <= pr.mutual_info <= 1.1 * math.log(2.0) + 1e-9


def test_qfunc_values():
    assert qfunc(2.0) == pytest.approx(0.0227501, abs=1e-6)
    assert qfunc(0.0) == 0.5


def test_ber_requires_binary():
    fp = solve_rs(make_wbes(1.1), GaussianPrior(1.0), GaussianChannel(0.2))
    with pytest.raises(UnsupportedError):
        ber_from_fixed_point(fp, GaussianPrior(1.0))


def test_gaussian_prior_mutual_info_matches_logdet():
    for beta, s2 in ((0.5, SNR6), (1.1, SNR6), (2.0, 0.25)):
        spec = make_marchenko_pastur(beta)
        prior, ch = GaussianPrior(1.0), GaussianChannel(s2)
        fp = solve_rs(spec, prior, ch)
        pr = predict(fp, spec, prior, ch)
        analytic = 0.5 * beta * spec.average(lambda lam: np.log1p(lam / s2))
        assert pr.mutual_info == pytest.approx(analytic, abs=1e-9)


def test_verify_annealed_binary_and_gaussian():
    ch = GaussianChannel(0.1)
    t_x, t_hat_x, t_u, t_hat_u = verify_annealed(make_wbes(1.1), BinaryPrior(), ch)
    assert t_x == pytest.approx(1.0, abs=1e-8)
    assert abs(t_hat_x) < 1e-8 and abs(t_u) < 1e-8
    assert t_hat_u == pytest.approx(1.1, abs=1e-8)
    t_x, _, _, t_hat_u = verify_annealed(make_marchenko_pastur(0.5), GaussianPrior(2.0), ch)
    assert t_x == pytest.approx(2.0, abs=1e-8)
    assert t_hat_u == pytest.approx(1.0, abs=1e-8)


def test_verify_annealed_tabulated():
    prior = TabulatedPrior([-2.0, 0.0, 2.0], [0.25, 0.5, 0.25])
    t_x, _, _, t_hat_u = verify_annealed(make_wbes(1.1), prior, GaussianChannel(0.1))
    assert t_x == pytest.approx(2.0, abs=1e-8)
    assert t_hat_u == pytest.approx(2.2, abs=1e-8)


def test_mixture_measure_normalization():
    """P(z; qhat) integrates to 1 over Dz: the mixture decomposition used
    for the overlap/entropy integrals conserves mass."""
    from specchan._quad import gh_nodes

    prior = BinaryPrior()
    for qhat in (0.1, 1.0, 10.0):
        z, w = gh_nodes(201)
        pz = np.exp(-qhat / 2.0) * np.cosh(math.sqrt(qhat) * z)
        assert float(w @ pz) == pytest.approx(1.0, abs=1e-9)


def test_overlap_monotone_and_bounded():
    prior = BinaryPrior()
    vals = [overlap_from_qhat(prior, q) for q in (0.1, 0.5, 2.0, 8.0, 50.0)]
    assert all(0.0 <= v <= 1.0 for v in vals)
    assert vals == sorted(vals)


def test_entropy_binary_closed_form_limits():
    # I_x -> qhat/2 - ln 2 for large qhat; -> 0 for qhat -> 0
    assert prior_mixture_entropy(BinaryPrior(), 1e-12) == pytest.approx(0.0, abs=1e-9)
    q = 200.0
    assert prior_mixture_entropy(BinaryPrior(), q) == pytest.approx(q / 2 - math.log(2), rel=1e-9)


def test_branches_unique_at_6db():
    fps = solve_rs_branches(make_wbes(1.1), BinaryPrior(), GaussianChannel(SNR6))
    assert len(fps) == 1


def test_monotone_ber_along_snr_grid():
    spec = make_wbes(1.1)
    prior = BinaryPrior()
    bers = []
    for db in (2.0, 4.0, 6.0, 8.0, 10.0):
        fp = solve_rs(spec, prior, GaussianChannel(10 ** (-db / 10) / 2))
        bers.append(qfunc(math.sqrt(fp.q_hat_x)))
    assert all(b2 < b1 for b1, b2 in zip(bers, bers[1:]))


@pytest.mark.slow
def test_nishimori_decoder_consistency():
    """T_x - q_x equals the decoder's converged chi_x within 3 SE over 100
    trials at K = 512."""
    from specchan.decoder import DecodeOptions, decode_wbes_gaussian
    from specchan.ensemble import make_instance

    K, beta = 512, 1.1
    N = round(K / beta)
    ch = GaussianChannel(SNR6)
    fp = solve_rs(make_wbes(K / N), BinaryPrior(), ch)
    chis = []
    for i in range(100):
        inst = make_instance("wbes", N, K, BinaryPrior(), ch, seed=42000 + i)
        r = decode_wbes_gaussian(inst.H, inst.y, K / N, SNR6,
                                 DecodeOptions(max_iter=300, record_trajectory=True))
        chis.append(r.trajectory[-1].chi_x)
    chis = np.asarray(chis)
    se = chis.std(ddof=1) / math.sqrt(len(chis))
    assert abs(chis.mean() - (fp.T_x - fp.q_x)) <= 3 * se
