import math

import numpy as np
import pytest

from linresp import (
    BasisSpec,
    DomainError,
    Hermite,
    Laguerre,
    NumericsError,
    ParameterError,
    SampleSeries,
    diagnostics_sweep,
    error_bound,
    eval_density,
    eval_density_batch,
    eval_density_gradient,
    eval_density_gradient_batch,
    eval_kde,
    eval_kde_batch,
    eval_kde_gradient,
    fit_embedding,
    fit_kde,
    load_density,
    save_density,
    select_delta,
)
from linresp.density import DensityEstimate, eval_density_with_score_batch

from oracles import gauss_hermite_rule

_trapz = getattr(np, "trapezoid", None) or np.trapz


def hermite_spec(order, beta=1.0, rho=0.5, d=1, caps=None):
    return BasisSpec(families=(Hermite(),) * d, order=order, beta=beta, rho=rho, degree_caps=caps)


def make_estimate(coeffs, order, beta=1.0, d=1):
    spec = hermite_spec(order, beta=beta, d=d)
    return DensityEstimate(spec=spec, coeffs=np.asarray(coeffs, dtype=float), delta=0.0, n_samples=1)


# --- coefficient fitting -------------------------------------------------------

def test_single_sample_coefficients_are_basis_values():
    est = fit_embedding(np.array([[0.0]]), hermite_spec(2))
    assert est.coeffs[0] == 1.0
    assert est.coeffs[1] == 0.0
    assert est.coeffs[2] == pytest.approx(-1.0 / math.sqrt(2.0), abs=1e-15)


def test_gaussian_iid_recovery():
    rng = np.random.default_rng(123)
    X = rng.standard_normal((100_000, 1))
    est = fit_embedding(X, hermite_spec(10))
    assert est.coeffs[0] == 1.0  # exact: psi_0 * W^0 == 1
    assert np.all(np.abs(est.coeffs[1:]) < 5.0 / math.sqrt(X.shape[0]))


def test_fit_is_deterministic_across_threads():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((150_000, 2))
    spec = hermite_spec(8, d=2)
    a = fit_embedding(X, spec, threads=1)
    b = fit_embedding(X, spec, threads=4)
    assert np.array_equal(a.coeffs, b.coeffs)


def test_fit_domain_error_names_sample_and_coordinate():
    spec = BasisSpec(families=(Laguerre(1), Hermite()), order=3, shift=(0.0, 0.0))
    X = np.array([[0.5, 0.0], [-0.25, 1.0]])
    with pytest.raises(DomainError, match="coordinate 0"):
        fit_embedding(X, spec)


def test_fit_langevin_shaped_truncation():
    # order-(M1, M2) = (4, 0) truncation has 5 coefficients
    rng = np.random.default_rng(9)
    X = np.stack([rng.gamma(2.0, size=500), rng.standard_normal(500)], axis=1)
    spec = BasisSpec(
        families=(Laguerre(1), Hermite()), order=4, degree_caps=(4, 0), shift=(0.0, 0.0)
    )
    est = fit_embedding(X, spec)
    assert est.coeffs.shape == (5,)
    assert est.coeffs[0] == 1.0


def test_fit_rejects_low_beta():
    with pytest.raises(ParameterError):
        fit_embedding(np.zeros((4, 1)), BasisSpec(families=(Hermite(),), order=2, beta=0.45))


# --- evaluation ------------------------------------------------------------------

def test_eval_density_of_pure_weight_estimate():
    est = make_estimate([1.0, 0.0, 0.0], order=2)
    for x in (-3.0, -0.5, 0.0, 1.7, 6.0):
        w = math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)
        assert eval_density(est, [x]) == pytest.approx(w, rel=1e-14)


def test_eval_density_can_be_negative():
    est = make_estimate([0.0, 0.0, 1.0], order=2)  # psi_2(0) < 0
    assert eval_density(est, [0.0]) < 0.0  # no clamping in the evaluation path


def test_fitted_gaussian_density_near_truth():
    rng = np.random.default_rng(77)
    X = rng.standard_normal((100_000, 1))
    est = fit_embedding(X, hermite_spec(10))
    assert eval_density(est, [0.0]) == pytest.approx((2 * math.pi) ** -0.5, abs=0.02)
    g = eval_density_gradient(est, [0.0])
    assert abs(g[0]) < 0.02


def test_gradient_of_pure_weight_estimate():
    est = make_estimate([1.0, 0.0, 0.0], order=2)
    for x in (-2.0, 0.3, 1.5):
        w = math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)
        assert eval_density_gradient(est, [x])[0] == pytest.approx(-x * w, rel=1e-13)


def test_gradient_matches_finite_difference_random_coeffs():
    rng = np.random.default_rng(31)
    spec = BasisSpec(
        families=(Hermite(), Laguerre(1)), order=12, beta=1.0, rho=0.5, shift=(0.0, 0.0)
    )
    est = DensityEstimate(spec=spec, coeffs=rng.normal(size=spec.n_basis), n_samples=1)
    pts = np.stack([rng.normal(size=12), rng.uniform(0.2, 4.0, size=12)], axis=1)
    grad = eval_density_gradient_batch(est, pts)
    h = 1e-6
    for k, p in enumerate(pts):
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            fd = (eval_density(est, p + e) - eval_density(est, p - e)) / (2 * h)
            assert grad[k, j] == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_gradient_at_laguerre_origin():
    # beta * theta = 1: exact finite limit; beta * theta = 0.5: divergent
    spec = BasisSpec(families=(Laguerre(1),), order=2, beta=1.0, shift=(0.0,))
    est = DensityEstimate(spec=spec, coeffs=np.array([1.0, 0.0, 0.0]), n_samples=1)
    # p(x) = x exp(-x): p'(0) = 1
    assert eval_density_gradient(est, [0.0])[0] == pytest.approx(1.0, rel=1e-12)
    spec_lo = BasisSpec(families=(Laguerre(1),), order=1, beta=0.5, shift=(0.0,))
    est_lo = DensityEstimate(spec=spec_lo, coeffs=np.array([1.0, 0.0]), n_samples=1)
    with pytest.raises(DomainError):
        eval_density_gradient(est_lo, [0.0])


def test_score_path_is_exact_for_pure_weight():
    est = make_estimate([1.0, 0.0, 0.0], order=2)
    X = np.linspace(-3, 3, 11)[:, None]
    p, score = eval_density_with_score_batch(est, X)
    assert np.array_equal(score[:, 0], -X[:, 0])  # bitwise: 0/S + beta * (-x)


# --- positivity threshold ---------------------------------------------------------

def test_select_delta_positive_everywhere():
    est = make_estimate([1.0, 0.0, 0.0], order=2)
    X = np.linspace(-3.0, 3.0, 101)[:, None]
    sel = select_delta(est, X)
    assert not sel.mask.any()
    assert sel.delta_m == pytest.approx(float(eval_density_batch(est, X).min()))
    assert sel.delta == sel.delta_m  # above the 1e-7 floor here
    assert est.delta == sel.delta


def test_select_delta_floor_applies():
    est = make_estimate([1.0, 0.0, 0.0], order=2)
    X = np.array([[0.0], [7.0]])  # density at 7 is ~ 9e-12, below the floor
    sel = select_delta(est, X)
    assert sel.delta == 1e-7
    assert sel.delta_m < 1e-7
    assert sel.mask.tolist() == [False, True]


def test_select_delta_degenerate_fit():
    est = make_estimate([-1.0, 0.0, 0.0], order=2)
    with pytest.raises(NumericsError):
        select_delta(est, np.zeros((3, 1)))


# --- selection diagnostics ----------------------------------------------------------

def test_shell_norm_matches_brute_force_recompute():
    rng = np.random.default_rng(17)
    X = rng.standard_normal((20_000, 2))
    spec = hermite_spec(0, d=2)
    diag = diagnostics_sweep(X, spec, range(0, 7))
    for i, m in enumerate(diag.orders):
        refit = fit_embedding(X, hermite_spec(int(m) + 1, d=2))
        idx = refit.spec.multi_indices()
        shell = refit.coeffs[idx.sum(axis=1) == int(m) + 1]
        assert diag.shell_norm[i] ** 2 == pytest.approx(float(np.sum(shell**2)), abs=1e-12)


def test_diagnostics_rejection_matches_direct_count():
    rng = np.random.default_rng(19)
    X = rng.standard_normal((5_000, 1))
    diag = diagnostics_sweep(X, hermite_spec(0), range(0, 9))
    for i, m in enumerate(diag.orders):
        est = fit_embedding(X, hermite_spec(int(m)))
        vals = eval_density_batch(est, X)
        pos = vals > 0
        assert diag.rejection[i] == pytest.approx(float(np.mean(vals < vals[pos].min())))
        assert diag.delta_m[i] == pytest.approx(float(vals[pos].min()), rel=1e-12)


def test_diagnostics_orders_must_ascend():
    with pytest.raises(ParameterError):
        diagnostics_sweep(np.zeros((10, 1)), hermite_spec(0), [3, 2])


# --- Parseval / mass identities -------------------------------------------------------

def test_shell_parseval_by_quadrature():
    # || f_{M+1} - f_M ||^2 in L^2(W^(1-2 beta)) equals the shell coefficient norm
    rng = np.random.default_rng(23)
    X = rng.standard_normal((5_000, 1))
    nodes, weights = gauss_hermite_rule(96)
    for order in (3, 9, 20):
        lo = fit_embedding(X, hermite_spec(order))
        hi = fit_embedding(X, hermite_spec(order + 1))
        diff = eval_density_batch(hi, nodes[:, None]) - eval_density_batch(lo, nodes[:, None])
        # L^2(W^-1) norm via the W-weighted rule: integrand is diff^2 / W^2
        w_vals = np.exp(-0.5 * nodes**2) / math.sqrt(2 * math.pi)
        quad = float(np.sum(weights * diff**2 / w_vals**2))
        eta_sq = float(np.sum(hi.coeffs[order + 1 :] ** 2))
        assert quad == pytest.approx(eta_sq, abs=1e-8)


def test_unit_mass_identity_beta_one():
    # f_hat_0 = 1 exactly, and all higher basis functions integrate to zero
    rng = np.random.default_rng(29)
    X = rng.standard_normal((10_000, 1)) * 1.3 + 0.4
    est = fit_embedding(X, hermite_spec(12))
    assert est.coeffs[0] == 1.0
    nodes, weights = gauss_hermite_rule(64)
    dens = eval_density_batch(est, nodes[:, None])
    w_vals = np.exp(-0.5 * nodes**2) / math.sqrt(2 * math.pi)
    mass = float(np.sum(weights * dens / w_vals))
    assert mass == pytest.approx(1.0, abs=1e-12)


# --- KDE baseline -------------------------------------------------------------------

def test_kde_bandwidth_is_silverman():
    rng = np.random.default_rng(37)
    X = rng.standard_normal((5_000, 2)) * np.array([1.0, 2.0])
    kde = fit_kde(X)
    sigma = math.sqrt(X[:, 0].std() * X[:, 1].std())  # geometric mean
    expected = (4.0 / (4 * X.shape[0])) ** (1.0 / 6.0) * sigma
    assert kde.bandwidth == pytest.approx(expected, rel=1e-12)


def test_kde_consistency_at_origin():
    rng = np.random.default_rng(41)
    X = rng.standard_normal((100_000, 1))
    kde = fit_kde(X)
    assert eval_kde(kde, [0.0]) == pytest.approx((2 * math.pi) ** -0.5, abs=0.03)


def test_kde_positive_and_normalized():
    rng = np.random.default_rng(43)
    X = rng.standard_normal((2_000, 1))
    kde = fit_kde(X)
    probes = rng.uniform(-8, 8, size=(10_000, 1))
    assert np.all(eval_kde_batch(kde, probes) >= 0.0)
    xs = np.linspace(-10, 10, 2001)
    vals = eval_kde_batch(kde, xs[:, None])
    assert _trapz(vals, xs) == pytest.approx(1.0, abs=1e-3)


def test_kde_gradient_matches_finite_difference():
    rng = np.random.default_rng(47)
    X = rng.standard_normal((500, 2))
    kde = fit_kde(X)
    for p in rng.normal(size=(5, 2)):
        g = eval_kde_gradient(kde, p)
        for j in range(2):
            e = np.zeros(2)
            e[j] = 1e-6
            fd = (eval_kde(kde, p + e) - eval_kde(kde, p - e)) / 2e-6
            assert g[j] == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_kde_validation_errors():
    with pytest.raises(ParameterError):
        fit_kde(np.zeros((1, 1)))
    with pytest.raises(ParameterError):
        fit_kde(np.ones((50, 1)))  # zero variance


# --- error-bound evaluator -------------------------------------------------------------

def test_error_bound_hypothesis_validation():
    with pytest.raises(ParameterError):
        error_bound(1000, 10, 1, rho=0.5, beta=1.0, rkhs_norm=1.0)
    with pytest.raises(ParameterError):
        error_bound(1000, 10, 1, rho=0.5, beta=0.4, rkhs_norm=1.0)
    # inside the range: fine
    assert error_bound(1000, 10, 1, rho=0.5, beta=0.6, rkhs_norm=1.0) > 0


def test_error_bound_bias_vanishes_monotonically():
    # with N huge the bound is dominated by rho^(M+1) ||f||_H^2
    vals = [
        error_bound(10**15, m, 1, rho=0.5, beta=0.6, rkhs_norm=1.0) for m in range(1, 30)
    ]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-8


def test_error_bound_value_matches_formula():
    n, m, d, rho, beta = 10_000, 5, 1, 0.5, 0.5
    c_f = (2 * math.pi) ** ((beta - 1) * d / 2) * (1 - rho**2) ** (-d / 4)
    expected = c_f * (m + 1) ** d / n + rho ** (m + 1)
    assert error_bound(n, m, d, rho=rho, beta=beta, rkhs_norm=1.0) == pytest.approx(expected, rel=1e-12)


def test_error_bound_non_iid_terms():
    with pytest.raises(ParameterError):
        error_bound(1000, 2, 1, rho=0.5, beta=0.6, rkhs_norm=1.0, iid=False)
    with pytest.raises(ParameterError):
        error_bound(1000, 2, 5, rho=0.5, beta=0.6, rkhs_norm=1.0, iid=False, mixing_sum=1.0)
    dep = error_bound(1000, 6, 1, rho=0.5, beta=0.6, rkhs_norm=1.0, iid=False, mixing_sum=1.0)
    ind = error_bound(1000, 6, 1, rho=0.5, beta=0.6, rkhs_norm=1.0)
    assert dep > ind
    # (5/2)^(M+3) handled in log space: no overflow at the degree cap
    assert error_bound(1000, 512, 1, rho=0.5, beta=0.6, rkhs_norm=1.0, iid=False, mixing_sum=1.0) > 0


# --- persistence ------------------------------------------------------------------------

def test_density_text_round_trip(tmp_path):
    rng = np.random.default_rng(53)
    X = np.stack([rng.gamma(2.0, size=300) - 1.0, rng.standard_normal(300)], axis=1)
    spec = BasisSpec(
        families=(Laguerre(1), Hermite()),
        order=6,
        beta=1.0,
        rho=0.4,
        shift=(2.0, 0.0),
        degree_caps=(6, 3),
    )
    est = fit_embedding(X, spec)
    select_delta(est, X)
    path = tmp_path / "density.txt"
    save_density(est, path)
    back = load_density(path)
    assert back.spec == est.spec
    assert np.array_equal(back.coeffs, est.coeffs)
    assert back.delta == est.delta
    assert back.n_samples == est.n_samples


def test_density_load_rejects_garbage(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("not a density file\n")
    with pytest.raises(ParameterError):
        load_density(path)
