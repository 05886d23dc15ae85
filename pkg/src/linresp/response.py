"""Conjugate fields and two-point Monte-Carlo linear-response statistics.

The response operator at lag s*dt is estimated by the sliding average

    k_A(s dt) ~ (1 / #retained) sum_n A(X_{n+s}) (x) B(X_n),

where B is the conjugate field B_i = -d_i[c_i p] / p for a forcing profile c
and a density p that is either analytic, a kernel-embedding estimate, or a
KDE.  Estimated fields are restricted: samples where the fitted density falls
below the positivity threshold delta are rejected, and a rejected X_n drops
the whole pair (the lagged argument X_{n+s} is never restricted, because only
B's argument is).

Sliding sums are direct O(N*S); an FFT cross-correlation would not survive
the rejection mask.  B is evaluated once per sample and cached before the lag
loop, which is what makes the basis-expansion path cheap next to a KDE.
Statistical error bars come from block averaging with a fixed default block
length 2^ceil(log2(sqrt(N))); they are reported alongside the estimates,
never used to gate anything by themselves.
"""

from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .density import (
    DensityEstimate,
    KdeEstimate,
    eval_density_with_score_batch,
    eval_kde_batch,
    eval_kde_gradient_batch,
)
from .errors import NumericsError, ParameterError, RejectedPointError
from .sde import EquilibriumDensity, SampleSeries


@dataclass(frozen=True)
class Forcing:
    """Componentwise forcing profile c and the diagonal derivatives d_i c_i."""

    c: Callable[[np.ndarray], np.ndarray]
    c_gradient: Callable[[np.ndarray], np.ndarray]


def constant_forcing() -> Forcing:
    """c_i = 1: the constant-force perturbation used by both benchmark systems."""
    return Forcing(c=lambda X: np.ones_like(X), c_gradient=lambda X: np.zeros_like(X))


def identity_observable(X: np.ndarray) -> np.ndarray:
    return X


@dataclass
class ConjugateField:
    """Conjugate variable B with provenance and rejection semantics.

    ``evaluate`` returns per-row values and a validity mask (mask-aware
    callers).  Calling the field at a single rejected point raises
    :class:`RejectedPointError` rather than producing NaN.
    """

    provenance: str
    _batch: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]
    meta: dict = field(default_factory=dict)

    def evaluate(self, X) -> tuple[np.ndarray, np.ndarray]:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        values, valid = self._batch(X)
        return values, valid

    def __call__(self, x) -> np.ndarray:
        pt = np.atleast_2d(np.asarray(x, dtype=np.float64))
        values, valid = self._batch(pt)
        if not valid[0]:
            raise RejectedPointError(
                f"conjugate field ({self.provenance}) evaluated below its positivity threshold at {x!r}"
            )
        return values[0]


def conjugate_analytic(eq: EquilibriumDensity, forcing: Forcing | None = None) -> ConjugateField:
    """B_i = -(c_i d_i log p_eq + d_i c_i) from the analytic equilibrium density."""
    forcing = forcing or constant_forcing()

    def batch(X):
        g = eq.gradient_log(X)
        values = -(forcing.c(X) * g + forcing.c_gradient(X))
        return values, np.ones(X.shape[0], dtype=bool)

    return ConjugateField(provenance="analytic", _batch=batch)


def conjugate_embedded(
    est: DensityEstimate, forcing: Forcing | None = None, delta: float | None = None
) -> ConjugateField:
    """Estimated conjugate field, defined only where the fitted density >= delta.

    ``delta`` defaults to the threshold stored on the estimate by
    ``select_delta`` and must be positive.
    """
    forcing = forcing or constant_forcing()
    delta = est.delta if delta is None else float(delta)
    if not delta > 0:
        raise ParameterError("conjugate_embedded needs delta > 0; run select_delta first")

    def batch(X):
        p, score = eval_density_with_score_batch(est, X)
        valid = p >= delta
        values = -(forcing.c(X) * score + forcing.c_gradient(X))
        values[~valid] = 0.0
        return values, valid

    return ConjugateField(provenance="embedding", _batch=batch, meta={"delta": delta, "order": est.spec.order})


def conjugate_kde(est: KdeEstimate, forcing: Forcing | None = None) -> ConjugateField:
    """KDE-based conjugate field; positive wherever the KDE does not underflow."""
    forcing = forcing or constant_forcing()

    def batch(X):
        p = eval_kde_batch(est, X)
        valid = p > 0.0
        g = eval_kde_gradient_batch(est, X)
        with np.errstate(divide="ignore", invalid="ignore"):
            values = -(forcing.c(X) * g / p[:, None] + forcing.c_gradient(X))
        values[~valid] = 0.0
        return values, valid

    return ConjugateField(provenance="kde", _batch=batch, meta={"bandwidth": est.bandwidth})


@dataclass
class ResponseCurve:
    """Matrix-valued lag correlation on a uniform lag grid.

    ``values[s]`` is the d_A x d matrix at lag ``lags[s]``; ``stderr`` holds
    block-averaging error bars (NaN where fewer than two blocks fit).
    ``mask_stats`` is the retained-sample fraction of the conjugate field.
    """

    lags: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    mask_stats: float
    normalization: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.lags = np.asarray(self.lags, dtype=np.float64)
        if self.lags.size > 1 and np.any(np.diff(self.lags) <= 0):
            raise ParameterError("lags must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise NumericsError("response curve contains non-finite entries")

    @property
    def n_lags(self) -> int:
        return self.lags.size

    def entry(self, i: int, j: int) -> np.ndarray:
        return self.values[:, i, j]

    def to_csv(self, path) -> None:
        """Columns ``lag_time, k_11, ..., k_dAd, stderr_11, ..., stderr_dAd``."""
        d_a, d = self.values.shape[1:]
        names = ["lag_time"]
        names += [f"k_{i + 1}{j + 1}" for i in range(d_a) for j in range(d)]
        names += [f"stderr_{i + 1}{j + 1}" for i in range(d_a) for j in range(d)]
        with open(path, "w") as fh:
            fh.write(",".join(names) + "\n")
            for s in range(self.n_lags):
                row = [self.lags[s]]
                row += [self.values[s, i, j] for i in range(d_a) for j in range(d)]
                row += [self.stderr[s, i, j] for i in range(d_a) for j in range(d)]
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

    def write_metadata(self, path, **extra) -> None:
        """JSON sidecar: normalization divisors, mask stats, and provenance."""
        payload = {
            "mask_stats": self.mask_stats,
            "normalization": None if self.normalization is None else list(map(float, self.normalization)),
            **{k: v for k, v in self.meta.items()},
            **extra,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


def default_block_length(n: int) -> int:
    """2^ceil(log2(sqrt(N))) samples per block."""
    if n <= 1:
        return 1
    return 1 << math.ceil(0.5 * math.log2(n))


def _lag_entry(a_col, b_col, valid, n, s, block):
    """Mean and blocked stderr of A[n+s] * B[n] over retained n < N - s."""
    length = n - s
    z = a_col[s : s + length] * b_col[:length]
    v = valid[:length]
    count = int(v.sum())
    if count == 0:
        return math.nan, math.nan
    mean = float(z.sum()) / count
    nb = length // block
    if nb >= 2:
        zb = z[: nb * block].reshape(nb, block).sum(axis=1)
        cb = v[: nb * block].reshape(nb, block).sum(axis=1)
        good = cb > 0
        if int(good.sum()) >= 2:
            means = zb[good] / cb[good]
            stderr = float(np.std(means, ddof=1) / math.sqrt(int(good.sum())))
        else:
            stderr = math.nan
    else:
        stderr = math.nan
    return mean, stderr


def response_mc(
    samples: SampleSeries,
    observable: Callable[[np.ndarray], np.ndarray],
    conjugate: ConjugateField,
    max_lag_steps: int,
    block_length: int | None = None,
    threads: int = 1,
) -> ResponseCurve:
    """Monte-Carlo lag correlation k_A(s dt) for s = 0 .. max_lag_steps.

    Pairs whose X_n is rejected by the conjugate field are dropped; the
    per-lag denominator counts retained pairs only.  A retained fraction
    below 50% is reported as a warning-grade diagnostic, not a failure.
    """
    X = samples.samples
    n = X.shape[0]
    if not 0 <= max_lag_steps < n:
        raise ParameterError(f"max_lag_steps must lie in [0, N), got {max_lag_steps} with N = {n}")
    A = np.asarray(observable(X), dtype=np.float64)
    if A.ndim == 1:
        A = A[:, None]
    if A.shape[0] != n:
        raise ParameterError("observable must map (N, d) samples to (N, d_A) values")
    bad = np.flatnonzero(~np.all(np.isfinite(A), axis=1))
    if bad.size:
        raise ParameterError(f"observable is non-finite at sample indices {bad[:10].tolist()}")
    B, valid = conjugate.evaluate(X)
    B = np.where(valid[:, None], B, 0.0)
    retained = float(valid.mean())
    low_retention = retained < 0.5
    if low_retention:
        warnings.warn(
            f"conjugate field retains only {retained:.1%} of samples; "
            "the restricted response estimate may be badly biased",
            stacklevel=2,
        )
    d_a, d = A.shape[1], B.shape[1]
    block = block_length or default_block_length(n)
    values = np.empty((max_lag_steps + 1, d_a, d))
    stderr = np.empty_like(values)

    def do_lag(s: int):
        for i in range(d_a):
            for j in range(d):
                values[s, i, j], stderr[s, i, j] = _lag_entry(A[:, i], B[:, j], valid, n, s, block)

    lags_range = range(max_lag_steps + 1)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(do_lag, lags_range))
    else:
        for s in lags_range:
            do_lag(s)
    if np.isnan(values).any():
        raise NumericsError("response estimate has lags with no retained pairs")
    curve = ResponseCurve(
        lags=np.arange(max_lag_steps + 1) * samples.dt_effective,
        values=values,
        stderr=stderr,
        mask_stats=retained,
        meta={
            "source": conjugate.provenance,
            "block_length": block,
            "n_samples": n,
            "seed": samples.seed,
            "dt_effective": samples.dt_effective,
            "delta": conjugate.meta.get("delta"),
            "order": conjugate.meta.get("order"),
            "low_retention": low_retention,
        },
    )
    return curve


def normalize_diagonal(curve: ResponseCurve) -> ResponseCurve:
    """Divide each diagonal series by its lag-0 value (stored as divisors).

    Off-diagonal entries are untouched; normalizing twice is a no-op on the
    diagonals.
    """
    d_a, d = curve.values.shape[1:]
    k = min(d_a, d)
    divisors = np.array([curve.values[0, i, i] for i in range(k)])
    if np.any(divisors == 0.0):
        raise ParameterError("cannot normalize: a diagonal entry vanishes at lag 0")
    values = curve.values.copy()
    stderr = curve.stderr.copy()
    for i in range(k):
        values[:, i, i] /= divisors[i]
        stderr[:, i, i] /= abs(divisors[i])
    return replace(curve, values=values, stderr=stderr, normalization=divisors)


def second_moment_check(samples, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Empirical E[fn(X)^2] per component; the well-posedness premise for the
    response operator is that both A and B have finite second moments.

    Raises :class:`ParameterError` listing offending sample indices when the
    function is non-finite on the data.
    """
    X = samples.samples if isinstance(samples, SampleSeries) else np.asarray(samples, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    vals = np.asarray(fn(X), dtype=np.float64)
    if vals.ndim == 1:
        vals = vals[:, None]
    bad = np.flatnonzero(~np.all(np.isfinite(vals), axis=1))
    if bad.size:
        raise ParameterError(f"fn is non-finite at sample indices {bad[:10].tolist()}")
    return (vals * vals).mean(axis=0)
