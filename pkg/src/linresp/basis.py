"""Orthonormal polynomial families, weights, and tensor-product basis functions.

Two families are supported: Hermite polynomials, orthonormal with respect to
the standard Gaussian weight W(x) = (2*pi)^(-1/2) exp(-x^2/2) on the real
line, and Laguerre polynomials with integer shape theta, orthonormal with
respect to the Gamma weight G(x; theta) = x^theta exp(-x) / Gamma(theta+1)
on [0, inf).  All recurrences run directly on the *normalized* polynomials so
that degree ~90 evaluation never touches factorial-sized intermediates.

Sign convention: both families use the positive-leading-coefficient
(Gram-Schmidt) normalization.  For Laguerre this differs from the classical
convention by a factor (-1)^n per degree; every downstream quantity pairs a
polynomial with itself or with its own expansion coefficient, so the choice
is observable only through raw polynomial values.

A tensor-product basis function is Psi_m(x) = prod_i p_{m_i}(x_i) * W_i(x_i)^beta
with a single global exponent beta >= 1/2.  Products are accumulated as
log-magnitude plus sign and exponentiated once, so far-tail evaluations
underflow gracefully to zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence, Union

import numpy as np

from .errors import DomainError, ParameterError

MAX_DEGREE = 512
MAX_ENUMERATION = 2**31


@dataclass(frozen=True)
class Hermite:
    """Hermite family: orthonormal w.r.t. the standard Gaussian on R."""

    def __str__(self) -> str:
        return "hermite"


@dataclass(frozen=True)
class Laguerre:
    """Laguerre family with integer shape, orthonormal w.r.t. G(x; theta) on [0, inf)."""

    theta: int = 0

    def __post_init__(self):
        if not isinstance(self.theta, (int, np.integer)) or self.theta < 0:
            raise ParameterError(f"Laguerre shape must be a non-negative integer, got {self.theta!r}")

    def __str__(self) -> str:
        return f"laguerre(theta={self.theta})"


PolyFamily = Union[Hermite, Laguerre]


def _check_degree(n: int) -> None:
    if n < 0:
        raise ParameterError(f"polynomial degree must be >= 0, got {n}")
    if n > MAX_DEGREE:
        raise ParameterError(f"degree {n} exceeds the configured maximum {MAX_DEGREE}")


def _check_laguerre_domain(x: np.ndarray) -> None:
    if np.any(x < 0):
        bad = float(np.min(x))
        raise DomainError(f"Laguerre evaluation requires x >= 0, got minimum {bad}")


def poly_table(family: PolyFamily, max_degree: int, x: np.ndarray) -> np.ndarray:
    """Table of normalized polynomial values, shape ``(x.size, max_degree + 1)``.

    Column ``n`` holds p_n evaluated at the points ``x``; the three-term
    recurrence runs on normalized polynomials.
    """
    _check_degree(max_degree)
    x = np.asarray(x, dtype=np.float64)
    flat = np.ravel(x)
    table = np.empty((flat.size, max_degree + 1))
    table[:, 0] = 1.0
    if isinstance(family, Hermite):
        if max_degree >= 1:
            table[:, 1] = flat
        for n in range(1, max_degree):
            table[:, n + 1] = (flat * table[:, n] - math.sqrt(n) * table[:, n - 1]) / math.sqrt(n + 1)
    else:
        _check_laguerre_domain(flat)
        th = float(family.theta)
        if max_degree >= 1:
            table[:, 1] = (flat - (th + 1.0)) / math.sqrt(th + 1.0)
        for n in range(1, max_degree):
            table[:, n + 1] = (
                (flat - (2.0 * n + th + 1.0)) * table[:, n]
                - math.sqrt(n * (n + th)) * table[:, n - 1]
            ) / math.sqrt((n + 1.0) * (n + 1.0 + th))
    return table


def poly_derivative_table(family: PolyFamily, max_degree: int, x: np.ndarray) -> np.ndarray:
    """Table of first derivatives of the normalized polynomials.

    Hermite uses p_n' = sqrt(n) p_{n-1}; Laguerre uses the classical identity
    L_n' = L_{n-1}' - L_{n-1} carried through the normalization constants,
    p_n' = sqrt(n/(n+theta)) (p_{n-1} - p_{n-1}'), which stays finite at x = 0.
    """
    _check_degree(max_degree)
    x = np.asarray(x, dtype=np.float64)
    flat = np.ravel(x)
    table = poly_table(family, max_degree, flat)
    deriv = np.zeros_like(table)
    if isinstance(family, Hermite):
        for n in range(1, max_degree + 1):
            deriv[:, n] = math.sqrt(n) * table[:, n - 1]
    else:
        th = float(family.theta)
        for n in range(1, max_degree + 1):
            deriv[:, n] = math.sqrt(n / (n + th)) * (table[:, n - 1] - deriv[:, n - 1])
    return deriv


def eval_poly(family: PolyFamily, n: int, x):
    """Value of the degree-``n`` orthonormal polynomial at ``x`` (scalar or array)."""
    _check_degree(n)
    arr = np.asarray(x, dtype=np.float64)
    out = poly_table(family, n, arr)[:, n].reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


def eval_poly_derivative(family: PolyFamily, n: int, x):
    """First derivative of the degree-``n`` orthonormal polynomial at ``x``."""
    _check_degree(n)
    arr = np.asarray(x, dtype=np.float64)
    out = poly_derivative_table(family, n, arr)[:, n].reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def log_weight(family: PolyFamily, x) -> np.ndarray:
    """log of the family weight; -inf where the weight vanishes."""
    arr = np.asarray(x, dtype=np.float64)
    if isinstance(family, Hermite):
        return -0.5 * arr * arr - _LOG_SQRT_2PI
    _check_laguerre_domain(arr)
    th = family.theta
    if th == 0:
        return -arr
    with np.errstate(divide="ignore"):
        logx = np.log(arr)
    return th * logx - arr - math.lgamma(th + 1)


def eval_weight(family: PolyFamily, x, power: float):
    """W(x)^power (Hermite) or G(x; theta)^power (Laguerre), computed in log space.

    Underflow degrades gracefully to 0.  ``power == 0`` returns exactly 1.
    """
    if power < 0:
        raise ParameterError(f"weight power must be >= 0, got {power}")
    arr = np.asarray(x, dtype=np.float64)
    if power == 0:
        if isinstance(family, Laguerre):
            _check_laguerre_domain(arr)
        out = np.ones_like(arr)
    else:
        lw = log_weight(family, arr)
        with np.errstate(over="ignore"):
            out = np.exp(power * lw)
    return float(out) if out.ndim == 0 else out


def weight_log_derivative(family: PolyFamily, x) -> np.ndarray:
    """d/dx log W.  Hermite: -x.  Laguerre: theta/x - 1 (infinite at x = 0 for theta >= 1)."""
    arr = np.asarray(x, dtype=np.float64)
    if isinstance(family, Hermite):
        return -arr
    _check_laguerre_domain(arr)
    if family.theta == 0:
        return -np.ones_like(arr)
    with np.errstate(divide="ignore"):
        return family.theta / arr - 1.0


@lru_cache(maxsize=64)
def _cached_indices(d: int, order: int, caps: tuple | None) -> np.ndarray:
    rows: list[tuple[int, ...]] = []

    def shell(dim: int, total: int, prefix: tuple[int, ...]):
        if dim == 1:
            if caps is None or total <= caps[len(prefix)]:
                rows.append(prefix + (total,))
            return
        hi = total if caps is None else min(total, caps[len(prefix)])
        for first in range(hi + 1):
            shell(dim - 1, total - first, prefix + (first,))

    for s in range(order + 1):
        start = len(rows)
        shell(d, s, ())
        rows[start:] = sorted(rows[start:])
    out = np.asarray(rows, dtype=np.int64).reshape(len(rows), d)
    out.setflags(write=False)
    return out


def enumerate_multi_indices(d: int, order: int, degree_caps: Sequence[int] | None = None) -> np.ndarray:
    """All multi-indices m with ||m||_1 <= order, in graded-lexicographic order.

    Shells of equal total degree are contiguous and sorted lexicographically
    within a shell; the ordering is total, deterministic, and stable across
    runs.  ``degree_caps`` optionally restricts each coordinate's degree,
    giving anisotropic truncations such as (M1, M2) = (90, 0).

    Returns an integer array of shape ``(count, d)``.  Without caps the count
    is binomial(order + d, d).
    """
    if d < 1:
        raise ParameterError(f"dimension must be >= 1, got {d}")
    if order < 0:
        raise ParameterError(f"order must be >= 0, got {order}")
    if order > MAX_DEGREE:
        raise ParameterError(f"order {order} exceeds the configured maximum {MAX_DEGREE}")
    if degree_caps is not None:
        caps = tuple(int(c) for c in degree_caps)
        if len(caps) != d or any(c < 0 for c in caps):
            raise ParameterError(f"degree_caps must be {d} non-negative integers, got {degree_caps!r}")
    else:
        caps = None
        if math.comb(order + d, d) > MAX_ENUMERATION:
            raise ParameterError(
                f"basis of dimension {d}, order {order} has more than {MAX_ENUMERATION} elements"
            )
    return _cached_indices(d, order, caps)


@dataclass(frozen=True)
class BasisSpec:
    """Tensor-product basis specification.

    Parameters
    ----------
    families : per-dimension polynomial family (Hermite or Laguerre).
    order : total-degree truncation M; indices satisfy ||m||_1 <= M.
    beta : weight exponent, > 0.  The RKHS well-posedness range is
        beta >= 1/2 and is enforced by the estimation path; kernel evaluation
        below 1/2 stays available for boundedness studies (the Hille-Hardy
        kernel is bounded for beta >= sqrt(rho)/(1+sqrt(rho)) at fixed rho).
    rho : eigenvalue decay base, in (0, 1); lambda_m = rho^||m||_1.
    shift : per-dimension offset added to samples before evaluation.  Raw
        samples stay untouched; only basis evaluation sees shifted values.
    degree_caps : optional per-dimension degree bounds (anisotropic orders).
    """

    families: tuple[PolyFamily, ...]
    order: int
    beta: float = 1.0
    rho: float = 0.5
    shift: tuple[float, ...] = None  # type: ignore[assignment]
    degree_caps: tuple[int, ...] | None = None

    def __post_init__(self):
        fams = tuple(self.families)
        object.__setattr__(self, "families", fams)
        if not fams:
            raise ParameterError("BasisSpec needs at least one family")
        for f in fams:
            if not isinstance(f, (Hermite, Laguerre)):
                raise ParameterError(f"unsupported polynomial family {f!r}")
        if not self.beta > 0.0:
            raise ParameterError(f"beta must be > 0, got {self.beta}")
        if not (0.0 < self.rho < 1.0):
            raise ParameterError(f"rho must lie in (0, 1), got {self.rho}")
        if self.order < 0 or self.order > MAX_DEGREE:
            raise ParameterError(f"order must lie in [0, {MAX_DEGREE}], got {self.order}")
        if self.shift is None:
            object.__setattr__(self, "shift", (0.0,) * len(fams))
        else:
            sh = tuple(float(s) for s in self.shift)
            if len(sh) != len(fams):
                raise ParameterError(f"shift must have length {len(fams)}, got {len(sh)}")
            object.__setattr__(self, "shift", sh)
        if self.degree_caps is not None:
            caps = tuple(int(c) for c in self.degree_caps)
            if len(caps) != len(fams) or any(c < 0 for c in caps):
                raise ParameterError("degree_caps must be one non-negative integer per dimension")
            object.__setattr__(self, "degree_caps", caps)

    @property
    def dim(self) -> int:
        return len(self.families)

    def multi_indices(self) -> np.ndarray:
        return enumerate_multi_indices(self.dim, self.order, self.degree_caps)

    @property
    def n_basis(self) -> int:
        return self.multi_indices().shape[0]

    def axis_degree(self, i: int) -> int:
        """Highest degree needed along axis i."""
        if self.degree_caps is None:
            return self.order
        return min(self.order, self.degree_caps[i])

    def apply_shift(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) + np.asarray(self.shift)


def check_sample_domain(spec: BasisSpec, shifted: np.ndarray) -> None:
    """Raise DomainError naming sample index and coordinate on a violation."""
    for i, fam in enumerate(spec.families):
        if isinstance(fam, Laguerre):
            col = shifted[..., i]
            bad = np.flatnonzero(col < 0)
            if bad.size:
                n = int(bad[0])
                raise DomainError(
                    f"sample {n}, coordinate {i}: shifted value {col.flat[n] if col.ndim else col[n]:.6g} "
                    f"< 0 violates the Laguerre domain"
                )


def eval_basis_function(spec: BasisSpec, m: Sequence[int], x: Sequence[float]) -> float:
    """Psi_m(x) = prod_i p_{m_i}(x_i + shift_i) * W_i(x_i + shift_i)^beta.

    The total degree of ``m`` is not checked against ``spec.order``:
    enumeration, not evaluation, enforces the truncation.
    """
    m = np.asarray(m, dtype=np.int64)
    pt = np.asarray(x, dtype=np.float64)
    if m.shape != (spec.dim,) or pt.shape != (spec.dim,):
        raise ParameterError(f"multi-index and point must both have length {spec.dim}")
    xs = pt + np.asarray(spec.shift)
    for i, fam in enumerate(spec.families):
        if isinstance(fam, Laguerre) and xs[i] < 0:
            raise DomainError(f"coordinate {i}: shifted value {xs[i]:.6g} < 0 violates the Laguerre domain")
    # log-magnitude + sign accumulation, single exponentiation at the end
    log_mag = 0.0
    sign = 1.0
    for i, fam in enumerate(spec.families):
        p = eval_poly(fam, int(m[i]), xs[i])
        if p == 0.0:
            return 0.0
        sign *= math.copysign(1.0, p)
        lw = float(log_weight(fam, xs[i]))
        log_mag += math.log(abs(p)) + spec.beta * lw
    if log_mag == -math.inf:
        return 0.0
    return sign * math.exp(log_mag)


def default_shift(families: Sequence[PolyFamily], samples: np.ndarray) -> tuple[float, ...]:
    """Default per-coordinate shift: -floor(min sample) on Laguerre axes, 0 elsewhere."""
    X = np.asarray(samples, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    shift = []
    for i, fam in enumerate(families):
        if isinstance(fam, Laguerre):
            shift.append(-math.floor(float(np.min(X[:, i]))))
        else:
            shift.append(0.0)
    return tuple(shift)


def suggest_laguerre_theta(samples_1d: np.ndarray, max_theta: int = 40) -> int:
    """Integer-shape MLE for the Gamma weight G(x; theta) with unit rate.

    Scans theta = 0..max_theta and returns the log-likelihood maximizer.  A
    guideline for picking the Laguerre shape from data; no convergence
    criterion beyond the scan bound is asserted.
    """
    x = np.asarray(samples_1d, dtype=np.float64)
    if np.any(x < 0):
        raise DomainError("Laguerre shape fitting requires non-negative samples")
    n = x.size
    with np.errstate(divide="ignore"):
        sum_log = float(np.sum(np.log(x)))
    sum_x = float(np.sum(x))
    best, best_ll = 0, -math.inf
    for th in range(max_theta + 1):
        ll = th * sum_log - sum_x - n * math.lgamma(th + 1)
        if ll > best_ll:
            best, best_ll = th, ll
    return best


def excess_kurtosis(samples: np.ndarray) -> np.ndarray:
    """Per-coordinate sample excess kurtosis; a tail-decay diagnostic.

    Values near 0 are consistent with Gaussian tails (Hermite basis); this is
    reported as a guideline only, never asserted.
    """
    X = np.asarray(samples, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    mu = X.mean(axis=0)
    c = X - mu
    m2 = np.mean(c * c, axis=0)
    m4 = np.mean(c**4, axis=0)
    return m4 / (m2 * m2) - 3.0
