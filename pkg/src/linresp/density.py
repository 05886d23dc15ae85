"""Kernel-embedding density estimation, selection diagnostics, and the KDE baseline.

The estimator expands the target density in the weighted orthonormal system
Psi_m = p_m * W^beta.  Each coefficient is a plain Monte-Carlo average

    c_m = (1/N) sum_n p_m(X_n) * W(X_n)^(1-beta),

so fitting is a single pass over the data: no matrix inversion, no
optimization.  Evaluation of the fitted density and its gradient is then a
finite expansion over binomial(M+d, d) basis functions.

Reductions are chunked with a fixed chunk size and combined pairwise in chunk
order, so coefficients are bit-identical across runs and across worker
counts; the inner contractions use ``np.einsum`` (single-threaded, fixed
order) rather than BLAS, whose reduction order can depend on its thread pool.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .basis import (
    BasisSpec,
    Laguerre,
    check_sample_domain,
    log_weight,
    poly_derivative_table,
    poly_table,
    weight_log_derivative,
)
from .errors import DomainError, NumericsError, ParameterError
from .sde import SampleSeries

CHUNK = 1 << 16  # fixed reduction-tree leaf; changing it changes rounding

DELTA_FLOOR = 1e-7  # slightly above float32 epsilon; raw delta_M is still reported


def _as_samples(samples) -> np.ndarray:
    if isinstance(samples, SampleSeries):
        return samples.samples
    X = np.asarray(samples, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    return X


@dataclass
class DensityEstimate:
    """Fitted coefficient table over a :class:`BasisSpec`.

    ``coeffs[k]`` pairs with ``spec.multi_indices()[k]`` (graded-lex order).
    ``delta`` is the positivity threshold, 0 until :func:`select_delta` runs.
    """

    spec: BasisSpec
    coeffs: np.ndarray
    delta: float = 0.0
    n_samples: int = 0

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.float64)
        if c.shape != (self.spec.n_basis,):
            raise ParameterError(
                f"coefficient table must have {self.spec.n_basis} entries, got shape {c.shape}"
            )
        self.coeffs = c

    def coeff(self, m) -> float:
        """Coefficient for one multi-index."""
        idx = self.spec.multi_indices()
        m = np.asarray(m, dtype=np.int64)
        hit = np.flatnonzero(np.all(idx == m, axis=1))
        if hit.size == 0:
            raise ParameterError(f"multi-index {tuple(m)} is not in the truncation")
        return float(self.coeffs[hit[0]])


def _chunk_ranges(n: int):
    for lo in range(0, n, CHUNK):
        yield lo, min(lo + CHUNK, n)


def _tables_for(spec: BasisSpec, Xs: np.ndarray, derivative_axis: int | None = None):
    tables = []
    for i, fam in enumerate(spec.families):
        deg = spec.axis_degree(i)
        if derivative_axis == i:
            tables.append(poly_derivative_table(fam, deg, Xs[:, i]))
        else:
            tables.append(poly_table(fam, deg, Xs[:, i]))
    return tables


def _log_weight_sum(spec: BasisSpec, Xs: np.ndarray) -> np.ndarray:
    lw = np.zeros(Xs.shape[0])
    for i, fam in enumerate(spec.families):
        lw += log_weight(fam, Xs[:, i])
    return lw


def _fit_chunk(spec: BasisSpec, X: np.ndarray, lo: int, hi: int, indices: np.ndarray) -> np.ndarray:
    Xs = spec.apply_shift(X[lo:hi])
    try:
        check_sample_domain(spec, Xs)
    except DomainError as err:
        raise DomainError(f"(chunk offset {lo}) {err}") from None
    tables = _tables_for(spec, Xs)
    w = None
    if spec.beta != 1.0:
        w = np.exp((1.0 - spec.beta) * _log_weight_sum(spec, Xs))
    d = spec.dim
    if d == 1:
        if w is None:
            return np.einsum("ni->i", tables[0])[indices[:, 0]]
        return np.einsum("n,ni->i", w, tables[0])[indices[:, 0]]
    if d == 2:
        if w is None:
            mat = np.einsum("ni,nj->ij", tables[0], tables[1])
        else:
            mat = np.einsum("n,ni,nj->ij", w, tables[0], tables[1])
        return mat[indices[:, 0], indices[:, 1]]
    out = np.empty(indices.shape[0])
    for k, m in enumerate(indices):
        col = tables[0][:, m[0]].copy()
        for i in range(1, d):
            col *= tables[i][:, m[i]]
        out[k] = float(col.sum()) if w is None else float((col * w).sum())
    return out


def fit_embedding(samples, spec: BasisSpec, threads: int = 1) -> DensityEstimate:
    """Monte-Carlo coefficient fit c_m = (1/N) sum_n p_m(X_n) W(X_n)^(1-beta).

    The positivity threshold ``delta`` of the returned estimate is 0; run
    :func:`select_delta` to set it.  With beta = 1 the m = 0 coefficient is
    exactly 1 for any sample set.

    Raises :class:`DomainError` naming the first offending sample and
    coordinate if a shifted sample leaves a Laguerre domain.
    """
    X = _as_samples(samples)
    if X.shape[1] != spec.dim:
        raise ParameterError(f"samples have dimension {X.shape[1]}, basis expects {spec.dim}")
    if spec.beta < 0.5:
        raise ParameterError(f"estimation requires beta >= 1/2 (RKHS range), got {spec.beta}")
    n = X.shape[0]
    if n < 1:
        raise ParameterError("fit_embedding needs at least one sample")
    indices = spec.multi_indices()
    ranges = list(_chunk_ranges(n))
    if threads > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            partials = list(pool.map(lambda r: _fit_chunk(spec, X, r[0], r[1], indices), ranges))
    else:
        partials = [_fit_chunk(spec, X, lo, hi, indices) for lo, hi in ranges]
    # pairwise combination in fixed chunk order keeps results thread-count invariant
    coeffs = np.sum(np.stack(partials, axis=0), axis=0) / n
    return DensityEstimate(spec=spec, coeffs=coeffs, delta=0.0, n_samples=n)


def _coeff_matrix(est: DensityEstimate) -> np.ndarray:
    spec = est.spec
    shape = tuple(spec.axis_degree(i) + 1 for i in range(spec.dim))
    C = np.zeros(shape)
    C[tuple(spec.multi_indices().T)] = est.coeffs
    return C


def _poly_sum_chunk(est: DensityEstimate, tables, C: np.ndarray) -> np.ndarray:
    d = est.spec.dim
    if d == 1:
        return np.einsum("ni,i->n", tables[0], C)
    if d == 2:
        return np.einsum("ni,ij,nj->n", tables[0], C, tables[1])
    vals = np.zeros(tables[0].shape[0])
    for k, m in enumerate(est.spec.multi_indices()):
        col = tables[0][:, m[0]].copy()
        for i in range(1, d):
            col *= tables[i][:, m[i]]
        vals += est.coeffs[k] * col
    return vals


def eval_density_batch(est: DensityEstimate, X) -> np.ndarray:
    """f_{M,N} at each row of ``X``; may be negative (truncation artifact, no clamping)."""
    X = _as_samples(X)
    spec = est.spec
    if X.shape[1] != spec.dim:
        raise ParameterError(f"points have dimension {X.shape[1]}, basis expects {spec.dim}")
    C = _coeff_matrix(est)
    out = np.empty(X.shape[0])
    for lo, hi in _chunk_ranges(X.shape[0]):
        Xs = spec.apply_shift(X[lo:hi])
        check_sample_domain(spec, Xs)
        tables = _tables_for(spec, Xs)
        with np.errstate(over="ignore"):
            wbeta = np.exp(spec.beta * _log_weight_sum(spec, Xs))
        out[lo:hi] = _poly_sum_chunk(est, tables, C) * wbeta
    return out


def eval_density(est: DensityEstimate, x) -> float:
    """Scalar wrapper around :func:`eval_density_batch`."""
    return float(eval_density_batch(est, np.atleast_2d(np.asarray(x, dtype=np.float64)))[0])


def eval_density_gradient_batch(est: DensityEstimate, X) -> np.ndarray:
    """Gradient of the fitted density, shape ``(n, d)``.

    Uses the product rule d/dx [p_m W^beta] = (p_m' + beta (log W)' p_m) W^beta.
    At a Laguerre coordinate equal to 0 the (log W)' factor is singular; the
    correct limit is substituted (0 for beta*theta > 1, a finite value for
    beta*theta = 1) and a genuinely divergent case (beta*theta < 1) raises
    :class:`DomainError`.
    """
    X = _as_samples(X)
    spec = est.spec
    if X.shape[1] != spec.dim:
        raise ParameterError(f"points have dimension {X.shape[1]}, basis expects {spec.dim}")
    C = _coeff_matrix(est)
    out = np.empty((X.shape[0], spec.dim))
    for lo, hi in _chunk_ranges(X.shape[0]):
        Xs = spec.apply_shift(X[lo:hi])
        check_sample_domain(spec, Xs)
        tables = _tables_for(spec, Xs)
        lw = _log_weight_sum(spec, Xs)
        with np.errstate(over="ignore"):
            wbeta = np.exp(spec.beta * lw)
        S = _poly_sum_chunk(est, tables, C)
        for j, fam in enumerate(spec.families):
            dtab = poly_derivative_table(fam, spec.axis_degree(j), Xs[:, j])
            tabs_j = list(tables)
            tabs_j[j] = dtab
            Sj = _poly_sum_chunk(est, tabs_j, C)
            with np.errstate(invalid="ignore", over="ignore"):
                dlw = weight_log_derivative(fam, Xs[:, j])
                grad = (Sj + spec.beta * dlw * S) * wbeta
            if isinstance(fam, Laguerre) and fam.theta >= 1:
                at_zero = np.flatnonzero(Xs[:, j] == 0.0)
                if at_zero.size:
                    bt = spec.beta * fam.theta
                    if bt > 1.0:
                        grad[at_zero] = 0.0
                    elif bt == 1.0:
                        # log weight of the other axes only (the total is -inf here)
                        lw_other = np.zeros(at_zero.size)
                        for i, other in enumerate(spec.families):
                            if i != j:
                                lw_other += log_weight(other, Xs[at_zero, i])
                        limit = (
                            spec.beta
                            * fam.theta
                            * S[at_zero]
                            * np.exp(spec.beta * lw_other - spec.beta * math.lgamma(fam.theta + 1))
                        )
                        grad[at_zero] = limit  # the S_j W^beta term vanishes with the weight
                    else:
                        raise DomainError(
                            f"density gradient diverges at coordinate {j} = 0 "
                            f"(beta * theta = {bt} < 1)"
                        )
            out[lo:hi, j] = grad
    return out


def eval_density_gradient(est: DensityEstimate, x) -> np.ndarray:
    return eval_density_gradient_batch(est, np.atleast_2d(np.asarray(x, dtype=np.float64)))[0]


def eval_density_with_score_batch(est: DensityEstimate, X) -> tuple[np.ndarray, np.ndarray]:
    """Density values and the score grad p / p, with the weight divided out.

    Writing p = S(x) W(x)^beta with S the polynomial part, the score is
    S_j / S + beta (log W_j)', which never multiplies by the (possibly
    underflowing) weight only to divide it back out.  Rows where S = 0 (or a
    Laguerre coordinate sits at 0) get a zero score; such rows always fall
    below any positive threshold, so mask-aware callers drop them anyway.
    """
    X = _as_samples(X)
    spec = est.spec
    if X.shape[1] != spec.dim:
        raise ParameterError(f"points have dimension {X.shape[1]}, basis expects {spec.dim}")
    C = _coeff_matrix(est)
    p_out = np.empty(X.shape[0])
    score = np.empty((X.shape[0], spec.dim))
    for lo, hi in _chunk_ranges(X.shape[0]):
        Xs = spec.apply_shift(X[lo:hi])
        check_sample_domain(spec, Xs)
        tables = _tables_for(spec, Xs)
        lw = _log_weight_sum(spec, Xs)
        with np.errstate(over="ignore"):
            wbeta = np.exp(spec.beta * lw)
        S = _poly_sum_chunk(est, tables, C)
        p_out[lo:hi] = S * wbeta
        for j, fam in enumerate(spec.families):
            dtab = poly_derivative_table(fam, spec.axis_degree(j), Xs[:, j])
            tabs_j = list(tables)
            tabs_j[j] = dtab
            Sj = _poly_sum_chunk(est, tabs_j, C)
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                dlw = weight_log_derivative(fam, Xs[:, j])
                col = Sj / S + spec.beta * dlw
            col[~np.isfinite(col)] = 0.0
            score[lo:hi, j] = col
    return p_out, score


@dataclass
class DeltaSelection:
    """Positivity threshold and sample rejection mask.

    ``delta_m`` is the raw minimum positive sample density; ``delta`` is the
    effective threshold max(delta_m, floor); ``mask`` flags samples whose
    density falls below ``delta`` (True = rejected).
    """

    delta_m: float
    delta: float
    mask: np.ndarray

    @property
    def rejection_fraction(self) -> float:
        return float(self.mask.mean())


def select_delta(est: DensityEstimate, samples, floor: float = DELTA_FLOOR) -> DeltaSelection:
    """Set the positivity threshold from the data: delta_M = min positive
    sample density, floored at ``floor`` for the production threshold.

    Also stores the effective threshold on ``est.delta``.
    """
    X = _as_samples(samples)
    vals = eval_density_batch(est, X)
    positive = vals > 0.0
    if not positive.any():
        raise NumericsError("degenerate fit: the estimated density is non-positive at every sample")
    delta_m = float(vals[positive].min())
    delta = max(delta_m, floor)
    mask = vals < delta
    est.delta = delta
    return DeltaSelection(delta_m=delta_m, delta=delta, mask=mask)


@dataclass
class SelectionDiagnostics:
    """Per-order selection criteria: raw threshold delta_M, rejection
    probability R_M = P[p_{M,N}(X) < delta_M], and shell norm
    eta_M = sqrt(sum_{||m||_1 = M+1} c_m^2)."""

    orders: np.ndarray
    delta_m: np.ndarray
    rejection: np.ndarray
    shell_norm: np.ndarray
    n_samples: int


def diagnostics_sweep(samples, spec_base: BasisSpec, orders) -> SelectionDiagnostics:
    """Evaluate (delta_M, R_M, eta_M) over an ascending range of orders.

    Coefficients are fitted once at max(orders) + 1 and reused: shell
    contributions to the per-sample density accumulate incrementally, and
    eta_M reads stored shell coefficients rather than refitting.
    """
    orders = np.asarray(list(orders), dtype=np.int64)
    if orders.size == 0:
        raise ParameterError("orders must be a non-empty ascending sequence")
    if orders.size > 1 and np.any(np.diff(orders) <= 0):
        raise ParameterError("orders must be strictly ascending")
    m_top = int(orders[-1]) + 1
    spec_hi = replace(spec_base, order=m_top)
    est_hi = fit_embedding(samples, spec_hi)
    indices = spec_hi.multi_indices()
    totals = indices.sum(axis=1)
    X = _as_samples(samples)
    n = X.shape[0]
    want = set(int(m) for m in orders)

    # min positive density and non-positive count per requested order;
    # p < delta_M with delta_M = min positive value is exactly p <= 0.
    minpos = {m: math.inf for m in want}
    n_nonpos = {m: 0 for m in want}
    for lo, hi in _chunk_ranges(n):
        Xs = spec_hi.apply_shift(X[lo:hi])
        check_sample_domain(spec_hi, Xs)
        tables = _tables_for(spec_hi, Xs)
        with np.errstate(over="ignore"):
            wbeta = np.exp(spec_hi.beta * _log_weight_sum(spec_hi, Xs))
        running = np.zeros(hi - lo)
        for s in range(m_top + 1):
            sel = np.flatnonzero(totals == s)
            for k in sel:
                m = indices[k]
                col = tables[0][:, m[0]].copy()
                for i in range(1, spec_hi.dim):
                    col *= tables[i][:, m[i]]
                running += est_hi.coeffs[k] * col
            if s in want:
                dens = running * wbeta
                pos = dens > 0.0
                if pos.any():
                    minpos[s] = min(minpos[s], float(dens[pos].min()))
                n_nonpos[s] += int(np.count_nonzero(~pos))

    delta_m = np.array([minpos[int(m)] if math.isfinite(minpos[int(m)]) else math.nan for m in orders])
    rejection = np.array([n_nonpos[int(m)] / n for m in orders])
    shell_norm = np.array(
        [math.sqrt(float(np.sum(est_hi.coeffs[totals == int(m) + 1] ** 2))) for m in orders]
    )
    return SelectionDiagnostics(
        orders=orders, delta_m=delta_m, rejection=rejection, shell_norm=shell_norm, n_samples=n
    )


# ---------------------------------------------------------------------------
# KDE baseline
# ---------------------------------------------------------------------------

@dataclass
class KdeEstimate:
    """Gaussian-kernel KDE with a fixed (Silverman) bandwidth."""

    samples: np.ndarray
    bandwidth: float

    @property
    def dim(self) -> int:
        return self.samples.shape[1]


def fit_kde(samples, sigma: str | float = "geometric-mean") -> KdeEstimate:
    """Silverman-bandwidth KDE: h = (4 / ((d+2) N))^(1/(d+4)) * sigma.

    The scalar spread sigma defaults to the geometric mean of per-coordinate
    standard deviations (the multivariate reading of sigma({X_n}); the scalar
    form is ambiguous in d > 1).  Pass a float to override.
    """
    X = _as_samples(samples)
    n, d = X.shape
    if n < 2:
        raise ParameterError("KDE needs at least two samples to define a bandwidth")
    if isinstance(sigma, str):
        stds = X.std(axis=0)
        if np.any(stds == 0.0):
            raise ParameterError("KDE bandwidth undefined: a coordinate has zero variance")
        if sigma == "geometric-mean":
            scale = float(np.exp(np.mean(np.log(stds))))
        elif sigma == "pooled":
            scale = float(np.sqrt(np.mean(stds**2)))
        else:
            raise ParameterError(f"unknown sigma rule {sigma!r}")
    else:
        scale = float(sigma)
        if scale <= 0:
            raise ParameterError("sigma must be positive")
    h = (4.0 / ((d + 2) * n)) ** (1.0 / (d + 4)) * scale
    return KdeEstimate(samples=X, bandwidth=h)


_KDE_POINT_CHUNK = 512
_KDE_SAMPLE_CHUNK = 1 << 13


def _point_chunks(n: int):
    for lo in range(0, n, _KDE_POINT_CHUNK):
        yield lo, min(lo + _KDE_POINT_CHUNK, n)


def eval_kde_batch(est: KdeEstimate, X) -> np.ndarray:
    X = _as_samples(X)
    n, d = est.samples.shape
    h = est.bandwidth
    norm = 1.0 / (n * h**d * (2.0 * math.pi) ** (0.5 * d))
    out = np.zeros(X.shape[0])
    for lo, hi in _point_chunks(X.shape[0]):
        pts = X[lo:hi]
        acc = np.zeros(pts.shape[0])
        for slo in range(0, n, _KDE_SAMPLE_CHUNK):
            block = est.samples[slo : slo + _KDE_SAMPLE_CHUNK]
            diff = (pts[:, None, :] - block[None, :, :]) / h
            acc += np.exp(-0.5 * np.einsum("pnd,pnd->pn", diff, diff)).sum(axis=1)
        out[lo:hi] = acc * norm
    return out


def eval_kde(est: KdeEstimate, x) -> float:
    return float(eval_kde_batch(est, np.atleast_2d(np.asarray(x, dtype=np.float64)))[0])


def eval_kde_gradient_batch(est: KdeEstimate, X) -> np.ndarray:
    X = _as_samples(X)
    n, d = est.samples.shape
    h = est.bandwidth
    norm = 1.0 / (n * h ** (d + 2) * (2.0 * math.pi) ** (0.5 * d))
    out = np.zeros((X.shape[0], d))
    for lo, hi in _point_chunks(X.shape[0]):
        pts = X[lo:hi]
        acc = np.zeros((pts.shape[0], d))
        for slo in range(0, n, _KDE_SAMPLE_CHUNK):
            block = est.samples[slo : slo + _KDE_SAMPLE_CHUNK]
            diff = pts[:, None, :] - block[None, :, :]
            w = np.exp(-0.5 * np.einsum("pnd,pnd->pn", diff / h, diff / h))
            acc -= np.einsum("pn,pnd->pd", w, diff)
        out[lo:hi] = acc * norm
    return out


def eval_kde_gradient(est: KdeEstimate, x) -> np.ndarray:
    return eval_kde_gradient_batch(est, np.atleast_2d(np.asarray(x, dtype=np.float64)))[0]


# ---------------------------------------------------------------------------
# Statistical error-bound evaluator
# ---------------------------------------------------------------------------

def error_bound(
    n_samples: int,
    order: int,
    dim: int,
    rho: float,
    beta: float,
    rkhs_norm: float,
    mixing_sum: float | None = None,
    iid: bool = True,
    enforce_hypothesis: bool = True,
) -> float:
    """Upper bound on E[ ||f - f_{M,N}||^2_{L^2(W^(1-2 beta))} ].

    For i.i.d. samples the bound is C_f (M+1)^d / N + rho^(M+1) ||f||_H^2 with
    C_f = (2 pi)^((beta-1) d / 2) (1 - rho^2)^(-d/4) ||f||_H.  For dependent
    samples an alpha-mixing covariance term 24 C_eps sqrt(C_f) M^(d-1)
    (5/2)^(M+3) / N is added; ``mixing_sum`` supplies C_eps (it is an input,
    never estimated from data), and the bound requires d <= (3/2) M + 1.

    The certified hypothesis range is beta in [1/2, 1/(1+rho)].  Pass
    ``enforce_hypothesis=False`` to evaluate the formula outside that range
    for targets whose pointwise decay is verified directly (e.g. f = W with
    beta = 1); by default a violation raises :class:`ParameterError`.
    """
    if n_samples < 1:
        raise ParameterError("n_samples must be >= 1")
    if order < 0 or dim < 1:
        raise ParameterError("order must be >= 0 and dim >= 1")
    if not (0.0 < rho < 1.0):
        raise ParameterError(f"rho must lie in (0, 1), got {rho}")
    if rkhs_norm < 0:
        raise ParameterError("rkhs_norm must be >= 0")
    if enforce_hypothesis and not (0.5 <= beta <= 1.0 / (1.0 + rho)):
        raise ParameterError(
            f"beta = {beta} violates the bound's hypothesis beta in [1/2, 1/(1+rho)] "
            f"= [0.5, {1.0 / (1.0 + rho):.6g}]"
        )
    c_f = (2.0 * math.pi) ** ((beta - 1.0) * dim / 2.0) * (1.0 - rho * rho) ** (-dim / 4.0) * rkhs_norm
    total = c_f * (order + 1) ** dim / n_samples
    if not iid:
        if mixing_sum is None:
            raise ParameterError("the non-i.i.d. bound needs the mixing coefficient sum C_eps")
        if mixing_sum < 0:
            raise ParameterError("mixing_sum must be >= 0")
        if dim > 1.5 * order + 1.0:
            raise ParameterError(
                f"the non-i.i.d. bound requires d <= (3/2) M + 1; got d = {dim}, M = {order}"
            )
        # (5/2)^(M+3) assembled in log space; M^(d-1) with the 0^0 = 1 convention
        log_poly = 0.0 if (order == 0 and dim == 1) else (dim - 1) * math.log(max(order, 1))
        if (order == 0 and dim > 1) or mixing_sum == 0.0 or c_f == 0.0:
            cov = 0.0
        else:
            log_cov = (
                math.log(24.0 * mixing_sum)
                + 0.5 * math.log(c_f)
                + log_poly
                + (order + 3) * math.log(2.5)
                - math.log(n_samples)
            )
            cov = math.inf if log_cov > 709.0 else math.exp(log_cov)
        return cov + total + rho ** (order + 1) * rkhs_norm**2
    total += rho ** (order + 1) * rkhs_norm**2
    return total


# ---------------------------------------------------------------------------
# Text persistence for density estimates
# ---------------------------------------------------------------------------

_DENSITY_MAGIC = "linresp-density 1"


def save_density(est: DensityEstimate, path) -> None:
    """Versioned text format: spec block, graded-lex coefficient lines
    ``m_1 ... m_d, value``, then delta and the fitting sample count."""
    spec = est.spec
    lines = [_DENSITY_MAGIC, f"dim {spec.dim}"]
    for fam in spec.families:
        if isinstance(fam, Laguerre):
            lines.append(f"family laguerre {fam.theta}")
        else:
            lines.append("family hermite")
    lines.append(f"beta {spec.beta!r}")
    lines.append(f"rho {spec.rho!r}")
    lines.append(f"order {spec.order}")
    if spec.degree_caps is not None:
        lines.append("degree_caps " + " ".join(str(c) for c in spec.degree_caps))
    lines.append("shift " + " ".join(repr(s) for s in spec.shift))
    lines.append(f"coeffs {est.coeffs.size}")
    for m, c in zip(spec.multi_indices(), est.coeffs):
        lines.append(" ".join(str(int(v)) for v in m) + f", {float(c)!r}")
    lines.append(f"delta {est.delta!r}")
    lines.append(f"n_samples {est.n_samples}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_density(path) -> DensityEstimate:
    from .basis import Hermite  # local to avoid polluting module namespace

    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != _DENSITY_MAGIC:
        raise ParameterError(f"{path}: not a linresp density file")
    pos = 1

    def expect(key: str) -> list[str]:
        nonlocal pos
        if pos >= len(lines) or not lines[pos].startswith(key + " "):
            raise ParameterError(f"{path}: expected '{key} ...' at line {pos + 1}")
        parts = lines[pos].split()
        pos += 1
        return parts[1:]

    dim = int(expect("dim")[0])
    families = []
    for _ in range(dim):
        parts = expect("family")
        if parts[0] == "hermite":
            families.append(Hermite())
        elif parts[0] == "laguerre":
            families.append(Laguerre(theta=int(parts[1])))
        else:
            raise ParameterError(f"{path}: unknown family {parts[0]!r}")
    beta = float(expect("beta")[0])
    rho = float(expect("rho")[0])
    order = int(expect("order")[0])
    caps = None
    if pos < len(lines) and lines[pos].startswith("degree_caps "):
        caps = tuple(int(v) for v in expect("degree_caps"))
    shift = tuple(float(v) for v in expect("shift"))
    n_coeffs = int(expect("coeffs")[0])
    spec = BasisSpec(
        families=tuple(families), order=order, beta=beta, rho=rho, shift=shift, degree_caps=caps
    )
    if n_coeffs != spec.n_basis:
        raise ParameterError(f"{path}: coefficient count {n_coeffs} does not match the spec")
    idx = spec.multi_indices()
    coeffs = np.empty(n_coeffs)
    for k in range(n_coeffs):
        left, _, right = lines[pos].partition(",")
        pos += 1
        m = tuple(int(v) for v in left.split())
        if m != tuple(int(v) for v in idx[k]):
            raise ParameterError(f"{path}: coefficient line {k} out of graded-lex order")
        coeffs[k] = float(right)
    delta = float(expect("delta")[0])
    n_samples = int(expect("n_samples")[0])
    return DensityEstimate(spec=spec, coeffs=coeffs, delta=delta, n_samples=n_samples)
