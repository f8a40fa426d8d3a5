import math

import numpy as np
import pytest

from specchan.errors import ConvergenceError, DomainError, RangeError
from specchan.rmt import (
    eval_F,
    f_partials,
    gaussian_equivalent_variance,
    hstep_quantities,
    hstep_refresh,
    psi,
    psi_max,
    solve_hstep_saddle,
    solve_vstep_saddle,
    vstep_quantities,
)
from specchan.spectra import make_delta, make_marchenko_pastur, make_wbes

SNR6_SIGMA2 = 10.0 ** (-0.6) / 2.0


# -- eval_F -------------------------------------------------------------------


def test_f_zero_at_eta_zero():
    spec = make_wbes(1.3)
    assert eval_F(spec, 0.4, 0.0).value == 0.0
    assert eval_F(spec, 0.0, 0.7).value == 0.0


def test_f_mp_identity_spot():
    spec = make_marchenko_pastur(0.5)
    r = eval_F(spec, 0.3, 0.7)
    assert r.value == pytest.approx(-0.0525, abs=1e-9)


def test_f_mp_identity_grid_all_betas():
    for beta in (0.5, 1.1, 2.0):
        spec = make_marchenko_pastur(beta)
        for xi in np.arange(0.1, 1.05, 0.1):
            for eta in np.arange(0.1, 1.05, 0.1):
                r = eval_F(spec, float(xi), float(eta))
                assert abs(r.value + beta / 2.0 * xi * eta) < 1e-6


def test_f_delta_hand_value():
    # delta(lam-1), beta=1, xi=eta=0.5: saddle at Lx=Le=1, value assembled
    # from -(1/2)ln 2 + 1/2 + (1/2)ln 4 - 1
    spec = make_delta(1.0, beta=1.0)
    r = eval_F(spec, 0.5, 0.5)
    expected = -0.5 * math.log(2.0) + 0.5 + math.log(2.0) - 1.0
    assert r.value == pytest.approx(expected, abs=1e-9)
    assert r.saddle.lambda_xi == pytest.approx(1.0, abs=1e-6)
    assert r.saddle.lambda_eta == pytest.approx(1.0, abs=1e-6)


def test_f_wbes_monte_carlo_haar_oracle():
    """E cos(u^T H x) over Haar pairs vs exp(N F); the (0.2, 0.02) point
    resolves the prediction, the (0.5, 0.2) one checks consistency with an
    exponentially small value."""
    rng = np.random.default_rng(424242)
    N, K = 500, 550
    beta = K / N
    spec = make_wbes(beta)
    for xi, eta in ((0.2, 0.02), (0.5, 0.2)):
        c = math.sqrt(N * eta * K * xi * beta)
        a = rng.standard_normal((10_000, N))
        a /= np.linalg.norm(a, axis=1, keepdims=True)
        b = rng.standard_normal((10_000, K))
        b /= np.linalg.norm(b, axis=1, keepdims=True)
        vals = np.cos(c * np.einsum("ij,ij->i", a, b[:, :N]))
        est, se = vals.mean(), vals.std(ddof=1) / 100.0
        pred = math.exp(N * eval_F(spec, xi, eta).value)
        assert abs(est - pred) <= 3.0 * se


def test_f_small_coupling_ratio():
    spec = make_wbes(1.1)
    ratios = []
    for k in (2, 3, 4):
        s = 10.0 ** (-2 * k)
        val = eval_F(spec, 10.0**-k, 10.0**-k).value
        ratios.append(abs(val + 1.1 / 2.0 * spec.mean * s) / s)
    assert ratios[2] < ratios[0]
    assert ratios[2] < 1e-6


def test_f_boundary_small_eta():
    spec = make_wbes(1.1)
    assert abs(eval_F(spec, 0.4, 1e-8).value) < 1e-4
    assert abs(eval_F(spec, 1e-8, 0.6).value) < 1e-4


def test_f_envelope_consistency():
    spec = make_wbes(1.1)
    h = 1e-6
    for xi, eta in ((0.4, 0.3), (0.2, 0.5), (0.7, 0.1)):
        r = eval_F(spec, xi, eta)
        assert r.residual < 1e-10
        num_xi = (eval_F(spec, xi + h, eta).value - eval_F(spec, xi - h, eta).value) / (2 * h)
        env_xi = 1.1 * r.saddle.lambda_xi / 2.0 - 1.1 / (2.0 * xi)
        assert num_xi == pytest.approx(env_xi, abs=1e-6)
        num_eta = (eval_F(spec, xi, eta + h).value - eval_F(spec, xi, eta - h).value) / (2 * h)
        env_eta = r.saddle.lambda_eta / 2.0 - 1.0 / (2.0 * eta)
        assert num_eta == pytest.approx(env_eta, abs=1e-6)


def test_f_partials_match_saddle():
    spec = make_wbes(1.4)
    xi, eta = 0.3, 0.2
    r = eval_F(spec, xi, eta)
    dxi, deta = f_partials(spec, xi, eta)
    assert dxi == pytest.approx(1.4 * r.saddle.lambda_xi / 2.0 - 1.4 / (2 * xi), abs=1e-9)
    assert deta == pytest.approx(r.saddle.lambda_eta / 2.0 - 1.0 / (2 * eta), abs=1e-9)


def test_f_continued_branch_wbes():
    # beyond psi_max = 1/4 the value continues through the complex pair
    spec = make_wbes(1.1)
    _, smax = psi_max(spec)
    assert smax == pytest.approx(0.25, abs=1e-9)
    r = eval_F(spec, 0.7, 0.6)  # s = 0.42 > 1/4
    assert r.branch == "continued"
    assert r.saddle is None
    assert math.isfinite(r.value)


def test_f_negative_xi_rejected():
    with pytest.raises(DomainError):
        eval_F(make_wbes(1.1), -0.1, 0.2)


# -- saddle step solves -------------------------------------------------------


def test_hstep_delta_symmetric_point():
    spec = make_delta(1.0, beta=1.0)
    chi_u, lam_u = solve_hstep_saddle(spec, 0.5, 1.0)
    assert chi_u == pytest.approx(0.5, abs=1e-12)
    assert lam_u == pytest.approx(1.0, abs=1e-12)


def test_vstep_delta_symmetric_point():
    spec = make_delta(1.0, beta=1.0)
    chi_x, lam_x = solve_vstep_saddle(spec, 0.5, 1.0)
    assert chi_x == pytest.approx(0.5, abs=1e-12)
    assert lam_x == pytest.approx(1.0, abs=1e-12)


def _wbes_quadroot(chi_x, sigma2, beta):
    a = chi_x * sigma2
    b = chi_x * beta - sigma2
    return (-b + math.sqrt(b * b + 4 * a * (beta - 1.0))) / (2 * a)


def test_hstep_wbes_closed_form_lambda():
    """Feeding the closed-form quadratic root as lambda_x, the condition-1
    residual vanishes and the lambda_u root is sigma2."""
    beta, sigma2 = 1.1, 0.1
    spec = make_wbes(beta)
    for chi_x in (0.3, 0.6, 0.9):
        lam_x = _wbes_quadroot(chi_x, sigma2, beta)
        chi_u, lam_u = solve_hstep_saddle(spec, chi_x, lam_x)
        resid = abs(chi_x - spec.average(lambda lam: lam_u / (lam_x * lam_u + lam)))
        assert resid < 1e-10
        assert lam_u == pytest.approx(sigma2, rel=1e-9)


def test_hstep_monotone_in_chi_x():
    spec = make_wbes(2.0)
    lam_us = []
    for chi_x in (0.45, 0.47, 0.49):
        _, lam_u = solve_hstep_saddle(spec, chi_x, 1.0)
        lam_us.append(lam_u)
    assert lam_us[0] < lam_us[1] < lam_us[2]


def test_vstep_wbes_recovers_quadratic_lambda():
    beta, sigma2 = 1.1, 0.1
    spec = make_wbes(beta)
    lam_x = _wbes_quadroot(0.5, sigma2, beta)
    chi_u = lam_x / (lam_x * sigma2 + beta)  # condition 2 at (lam_x, sigma2)
    chi_x, lam_back = solve_vstep_saddle(spec, chi_u, sigma2)
    assert lam_back == pytest.approx(lam_x, rel=1e-9)
    assert chi_x == pytest.approx(0.5, rel=1e-9)


def test_hstep_vstep_composition_fixed_point():
    spec = make_wbes(1.3)
    chi_x, lam_x = 0.4, _wbes_quadroot(0.4, 0.2, 1.3)
    chi_u, lam_u = solve_hstep_saddle(spec, chi_x, lam_x)
    chi_x2, lam_x2 = solve_vstep_saddle(spec, chi_u, lam_u)
    assert chi_x2 == pytest.approx(chi_x, abs=1e-9)
    assert lam_x2 == pytest.approx(lam_x, abs=1e-9)


def test_hstep_boundary_cold_start():
    # chi_x = 1/lambda_x exactly: lambda_u -> inf, chi_hat_u -> b <lam>/L_x
    spec = make_wbes(1.1)
    chi_u, lam_u, chi_hat_u = hstep_quantities(spec, 1.0, 1.0)
    assert chi_u == 0.0
    assert math.isinf(lam_u)
    assert chi_hat_u == pytest.approx(1.1 * spec.mean, rel=1e-12)


def test_hstep_out_of_range():
    spec = make_wbes(1.1)
    with pytest.raises(RangeError) as exc:
        solve_hstep_saddle(spec, 1.5, 1.0)  # above the 1/lambda_x supremum
    lo, hi = exc.value.admissible
    assert hi == pytest.approx(1.0)


def test_hstep_refresh_matches_quadroot():
    beta, sigma2 = 1.1, SNR6_SIGMA2
    spec = make_wbes(beta)
    for chi_x in (1.0, 0.5, 0.2):
        lam_x, chi_u, chi_hat_u = hstep_refresh(spec, chi_x, sigma2)
        assert lam_x == pytest.approx(_wbes_quadroot(chi_x, sigma2, beta), rel=1e-12)
        assert chi_hat_u == pytest.approx(beta / lam_x, rel=1e-10)


def test_gaussian_equivalent_variance_values():
    assert gaussian_equivalent_variance(make_wbes(1.1), 1.0) == pytest.approx(1.1, abs=1e-12)
    assert gaussian_equivalent_variance(make_marchenko_pastur(2.0), 1.0) == pytest.approx(2.0, abs=1e-9)


def test_gaussian_equivalent_variance_monte_carlo(rng):
    # empirical variance of (Hx)_mu for sampled WBES and binary x
    from specchan.ensemble import build_matrix

    N, K = 500, 550
    spec = make_wbes(K / N)
    acc = []
    for _ in range(100):
        H = build_matrix("wbes", N, K, rng)
        x = 2.0 * rng.integers(0, 2, size=K) - 1.0
        acc.append(np.mean((H @ x) ** 2))
    assert np.mean(acc) == pytest.approx(gaussian_equivalent_variance(spec, 1.0), rel=0.02)


def test_psi_stable_against_naive():
    spec = make_wbes(1.1)
    for t in (1e-8, 1e-3, 0.5, 10.0, 1e6):
        naive = (1 - 1.1) * spec.resolvent(t) + 1.1 * t * spec.resolvent(t) ** 2
        assert psi(spec, t) == pytest.approx((t + 1.1 - 1) / (t + 1.1) ** 2, rel=1e-10)
        if t >= 0.5:  # the naive form is fine away from the 0*inf regime
            assert naive == pytest.approx(psi(spec, t), rel=1e-6)
