import math

import numpy as np
import pytest

from linresp import (
    BasisSpec,
    Hermite,
    MorsePotential,
    ParameterError,
    RejectedPointError,
    SampleSeries,
    TripleWellPotential,
    analytic_equilibrium,
    conjugate_analytic,
    conjugate_embedded,
    conjugate_kde,
    constant_forcing,
    fit_embedding,
    fit_kde,
    identity_observable,
    normalize_diagonal,
    response_mc,
    second_moment_check,
    select_delta,
    simulate_gradient_system,
)
from linresp.density import DensityEstimate
from linresp.response import Forcing, default_block_length

from oracles import trapezoid_2d


@pytest.fixture(scope="module")
def tw():
    return TripleWellPotential()


@pytest.fixture(scope="module")
def tw_eq(tw):
    return analytic_equilibrium(tw)


@pytest.fixture(scope="module")
def tw_series(tw):
    return simulate_gradient_system(tw, h=1e-3, n_steps=1_100_000, subsample=5, seed=101, burn_in=100_000)


def gaussian_estimate(d=1):
    spec = BasisSpec(families=(Hermite(),) * d, order=2 if d == 1 else 1, beta=1.0, rho=0.5)
    coeffs = np.zeros(spec.n_basis)
    coeffs[0] = 1.0
    return DensityEstimate(spec=spec, coeffs=coeffs, delta=1e-7, n_samples=1)


# --- conjugate fields -----------------------------------------------------------

def test_analytic_conjugate_is_potential_gradient(tw, tw_eq):
    rng = np.random.default_rng(7)
    pts = rng.uniform(-2, 3, size=(50, 2))
    field = conjugate_analytic(tw_eq)
    values, valid = field.evaluate(pts)
    assert valid.all()
    assert np.allclose(values, tw.gradient(pts) / tw.kBT, rtol=1e-12)


def test_analytic_conjugate_langevin_components():
    mo = MorsePotential()
    eq = analytic_equilibrium(mo)
    field = conjugate_analytic(eq)
    rng = np.random.default_rng(8)
    pts = np.stack([rng.uniform(-0.1, 2, 30), rng.normal(size=30)], axis=1)
    values, _ = field.evaluate(pts)
    assert np.allclose(values[:, 0], mo.force(pts[:, 0]) / mo.kBT)
    assert np.allclose(values[:, 1], pts[:, 1] / mo.kBT, rtol=0, atol=0)


def test_analytic_conjugate_standard_gaussian_is_identity():
    eq = type(
        "Eq",
        (),
        {
            "gradient_log": staticmethod(lambda X: -np.asarray(X)),
        },
    )()
    field = conjugate_analytic(eq)
    pts = np.linspace(-2, 2, 9)[:, None]
    values, _ = field.evaluate(pts)
    assert np.array_equal(values, pts)


def test_embedded_gaussian_field_is_bitwise_identity():
    # {c_0 = 1} estimate: B_hat(x) = x exactly, matching the analytic field bit for bit
    est = gaussian_estimate()
    field = conjugate_embedded(est)
    pts = np.linspace(-3, 3, 101)[:, None]
    values, valid = field.evaluate(pts)
    assert valid.all()
    assert np.array_equal(values, pts)


def test_embedded_field_requires_positive_delta():
    est = gaussian_estimate()
    est.delta = 0.0
    with pytest.raises(ParameterError):
        conjugate_embedded(est)


def test_rejected_point_raises_on_scalar_call():
    est = gaussian_estimate()
    field = conjugate_embedded(est, delta=1e-3)
    with pytest.raises(RejectedPointError):
        field([9.0])  # density ~ 1e-18 there
    values, valid = field.evaluate(np.array([[0.0], [9.0]]))
    assert valid.tolist() == [True, False]
    assert values[1, 0] == 0.0


def test_kde_conjugate_close_to_score(tw_series):
    sub = tw_series.samples[:20_000]
    kde = fit_kde(sub)
    field = conjugate_kde(kde)
    values, valid = field.evaluate(sub[:100])
    assert valid.all()
    assert np.all(np.isfinite(values))


def test_custom_forcing_enters_conjugate():
    est = gaussian_estimate()
    forcing = Forcing(c=lambda X: 2.0 * np.ones_like(X), c_gradient=lambda X: np.zeros_like(X))
    field = conjugate_embedded(est, forcing=forcing)
    pts = np.array([[1.5]])
    values, _ = field.evaluate(pts)
    assert values[0, 0] == pytest.approx(3.0, rel=1e-12)  # -(2 * (-x)) at x = 1.5


# --- response Monte-Carlo ----------------------------------------------------------

def test_single_sample_lag_zero_outer_product():
    series = SampleSeries(samples=np.array([[0.5, -2.0]]), dt_effective=1.0, seed=0)
    eq = type("Eq", (), {"gradient_log": staticmethod(lambda X: -np.asarray(X))})()
    curve = response_mc(series, identity_observable, conjugate_analytic(eq), max_lag_steps=0)
    x = np.array([0.5, -2.0])
    assert np.allclose(curve.values[0], np.outer(x, x))
    assert np.isnan(curve.stderr[0]).all()  # a single block gives no error bar


def test_lag_zero_equipartition_with_quadrature_oracle(tw, tw_eq, tw_series):
    # oracle: E[x_i d_j V] / kBT by direct 2-D quadrature against p_eq
    xs = np.linspace(-5.0, 7.0, 701)
    ys = np.linspace(-5.0, 7.0, 701)
    X1, X2 = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([X1, X2], axis=-1)
    dens = tw_eq.density(pts)
    grad = tw.gradient(pts) / tw.kBT
    oracle = np.empty((2, 2))
    for i in range(2):
        for j in range(2):
            oracle[i, j] = trapezoid_2d(pts[..., i] * grad[..., j] * dens, xs, ys)
    assert np.allclose(oracle, np.eye(2), atol=5e-7)  # integration by parts gives I exactly

    curve = response_mc(tw_series, identity_observable, conjugate_analytic(tw_eq), max_lag_steps=0)
    for i in range(2):
        for j in range(2):
            tol = 3.0 * curve.stderr[0, i, j]
            assert abs(curve.values[0, i, j] - oracle[i, j]) <= tol


def test_gaussian_closure_bit_identity():
    # embedded B from {c_0 = 1} and analytic B coincide pointwise, so the
    # response curves are identical at bit level
    rng = np.random.default_rng(21)
    series = SampleSeries(samples=rng.standard_normal((4_000, 1)), dt_effective=0.1, seed=5)
    eq = type("Eq", (), {"gradient_log": staticmethod(lambda X: -np.asarray(X))})()
    c_analytic = response_mc(series, identity_observable, conjugate_analytic(eq), max_lag_steps=20)
    c_embedded = response_mc(
        series, identity_observable, conjugate_embedded(gaussian_estimate()), max_lag_steps=20
    )
    assert np.array_equal(c_analytic.values, c_embedded.values)
    assert np.array_equal(c_analytic.stderr, c_embedded.stderr)


def test_cauchy_schwarz_bound_all_lags(tw_eq, tw_series):
    sub = SampleSeries(samples=tw_series.samples[:100_000], dt_effective=tw_series.dt_effective, seed=0)
    field = conjugate_analytic(tw_eq)
    curve = response_mc(sub, identity_observable, field, max_lag_steps=100)
    a2 = second_moment_check(sub, identity_observable)
    b_values, _ = field.evaluate(sub.samples)
    b2 = (b_values**2).mean(axis=0)
    bound = np.sqrt(a2)[:, None] * np.sqrt(b2)[None, :]
    assert np.all(np.abs(curve.values) <= bound[None, :, :] * (1 + 1e-12))


def test_mask_statistics_consistent_with_selection(tw_series):
    sub = tw_series.samples[:50_000]
    spec = BasisSpec(families=(Hermite(), Hermite()), order=20, beta=1.0, rho=0.5)
    est = fit_embedding(sub, spec)
    sel = select_delta(est, sub)
    series = SampleSeries(samples=sub, dt_effective=tw_series.dt_effective, seed=0)
    curve = response_mc(series, identity_observable, conjugate_embedded(est), max_lag_steps=5)
    assert curve.mask_stats == pytest.approx(1.0 - sel.rejection_fraction, abs=1e-15)


def test_low_retention_warns():
    rng = np.random.default_rng(33)
    series = SampleSeries(samples=rng.standard_normal((2_000, 1)), dt_effective=0.1, seed=1)
    est = gaussian_estimate()
    field = conjugate_embedded(est, delta=0.35)  # rejects most of the data
    with pytest.warns(UserWarning, match="retains only"):
        curve = response_mc(series, identity_observable, field, max_lag_steps=2)
    assert curve.meta["low_retention"] is True
    assert curve.mask_stats < 0.5


def test_nonfinite_observable_rejected():
    series = SampleSeries(samples=np.ones((10, 1)), dt_effective=1.0, seed=0)
    eq = type("Eq", (), {"gradient_log": staticmethod(lambda X: -np.asarray(X))})()

    def bad(X):
        out = X.copy()
        out[3] = np.inf
        return out

    with pytest.raises(ParameterError, match=r"\[3\]"):
        response_mc(series, bad, conjugate_analytic(eq), max_lag_steps=1)


def test_max_lag_validation():
    series = SampleSeries(samples=np.ones((10, 1)), dt_effective=1.0, seed=0)
    eq = type("Eq", (), {"gradient_log": staticmethod(lambda X: -np.asarray(X))})()
    with pytest.raises(ParameterError):
        response_mc(series, identity_observable, conjugate_analytic(eq), max_lag_steps=10)


def test_default_block_length():
    assert default_block_length(10**6) == 1024
    assert default_block_length(2) == 2
    assert default_block_length(1) == 1


# --- normalization ------------------------------------------------------------------

def test_normalize_diagonal_semantics(tw_eq, tw_series):
    sub = SampleSeries(samples=tw_series.samples[:20_000], dt_effective=tw_series.dt_effective, seed=0)
    curve = response_mc(sub, identity_observable, conjugate_analytic(tw_eq), max_lag_steps=10)
    normed = normalize_diagonal(curve)
    assert normed.values[0, 0, 0] == 1.0
    assert normed.values[0, 1, 1] == 1.0
    assert np.array_equal(normed.normalization, [curve.values[0, 0, 0], curve.values[0, 1, 1]])
    # off-diagonals untouched
    assert np.array_equal(normed.values[:, 0, 1], curve.values[:, 0, 1])
    twice = normalize_diagonal(normed)
    assert np.array_equal(twice.values, normed.values)


def test_normalize_rejects_zero_diagonal():
    curve_values = np.zeros((3, 2, 2))
    from linresp.response import ResponseCurve

    curve = ResponseCurve(
        lags=np.arange(3.0), values=curve_values, stderr=np.zeros_like(curve_values), mask_stats=1.0
    )
    with pytest.raises(ParameterError):
        normalize_diagonal(curve)


# --- second moments --------------------------------------------------------------------

def test_second_moment_zero_function(tw_series):
    out = second_moment_check(tw_series, lambda X: np.zeros(X.shape[0]))
    assert np.array_equal(out, [0.0])


def test_second_moment_identity_matches_quadrature(tw, tw_eq, tw_series):
    xs = np.linspace(-5.0, 7.0, 701)
    ys = np.linspace(-5.0, 7.0, 701)
    X1, X2 = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([X1, X2], axis=-1)
    dens = tw_eq.density(pts)
    oracle = np.array(
        [trapezoid_2d(pts[..., j] ** 2 * dens, xs, ys) for j in range(2)]
    )
    got = second_moment_check(tw_series, identity_observable)
    assert np.allclose(got, oracle, rtol=0.05)


def test_second_moment_langevin_conjugate():
    mo = MorsePotential()
    eq = analytic_equilibrium(mo)
    from linresp import simulate_langevin

    series = simulate_langevin(mo, h=1e-3, n_steps=600_000, subsample=10, seed=55, burn_in=100_000)
    field = conjugate_analytic(eq)
    got = second_moment_check(series, lambda X: field.evaluate(X)[0])
    # oracle: E[U'(x)^2] / kBT^2 by 1-D quadrature; E[v^2] / kBT^2 = 1 / kBT
    xs = np.linspace(-0.6, 4.0, 20_001)
    u = mo.value(xs)
    w = np.exp(-u / mo.kBT)
    trap = getattr(np, "trapezoid", None) or np.trapz
    z = trap(w, xs)
    oracle = np.array([trap(mo.force(xs) ** 2 * w, xs) / z / mo.kBT**2, 1.0 / mo.kBT])

    def blocked_stderr(vals, block=1024):
        nb = vals.size // block
        means = vals[: nb * block].reshape(nb, block).mean(axis=1)
        return means.std(ddof=1) / math.sqrt(nb)

    b_values, _ = field.evaluate(series.samples)
    for j in range(2):
        # U'(x)^2 is heavy-tailed and long-correlated; 4 blocked stderr is an
        # honest envelope where a fixed relative tolerance is not
        tol = 4.0 * blocked_stderr(b_values[:, j] ** 2)
        assert abs(got[j] - oracle[j]) <= tol


def test_second_moment_nonfinite_error():
    series = SampleSeries(samples=np.ones((5, 1)), dt_effective=1.0, seed=0)
    with pytest.raises(ParameterError):
        second_moment_check(series, lambda X: np.where(X > 0, np.nan, X)[:, 0])


# --- determinism across worker counts -----------------------------------------------

def test_response_thread_count_invariance(tw_eq, tw_series):
    sub = SampleSeries(samples=tw_series.samples[:200_000], dt_effective=tw_series.dt_effective, seed=0)
    field = conjugate_analytic(tw_eq)
    one = response_mc(sub, identity_observable, field, max_lag_steps=32, threads=1)
    many = response_mc(sub, identity_observable, field, max_lag_steps=32, threads=8)
    assert np.array_equal(one.values, many.values)
    assert np.array_equal(one.stderr, many.stderr)
