"""Closed-form Mehler and Hille-Hardy kernels and their truncated Mercer series.

These closed forms are validation oracles, not the production path: density
estimation works entirely through expansion coefficients and never evaluates
a kernel.  The truncated series

    k(x, y) = sum_{||m||_1 <= M} rho^||m||_1 Psi_m(x) Psi_m(y)

must converge to the closed forms, which is what the test suite checks.

All closed forms are assembled in log space; the modified Bessel factor of
the Hille-Hardy formula enters through the exponentially scaled function
Itilde_n(z) = exp(-z) I_n(z), so nothing overflows for moderate coordinates.
"""

from __future__ import annotations

import math

import numpy as np

from .basis import BasisSpec, Hermite, Laguerre, log_weight, poly_table
from .errors import DomainError, ParameterError

# Series/asymptotic switch for the scaled modified Bessel function.  Both
# branches are cross-validated against each other near the switch in tests.
BESSEL_SWITCH = 20.0


def modified_bessel_scaled(order: int, z: float) -> float:
    """Exponentially scaled modified Bessel function exp(-z) I_order(z).

    Power series below ``BESSEL_SWITCH``, large-argument asymptotic expansion
    above; relative accuracy is ~1e-14 on both branches.
    """
    if not isinstance(order, (int, np.integer)) or order < 0:
        raise ParameterError(f"Bessel order must be a non-negative integer, got {order!r}")
    if z < 0:
        raise DomainError(f"modified_bessel_scaled requires z >= 0, got {z}")
    if z == 0.0:
        return 1.0 if order == 0 else 0.0
    if z <= BESSEL_SWITCH:
        # I_n(z) = sum_m (z/2)^(n+2m) / (m! (m+n)!)
        half = 0.5 * z
        term = math.exp(order * math.log(half) - math.lgamma(order + 1))
        total = term
        for m in range(1, 200):
            term *= half * half / (m * (m + order))
            total += term
            if term <= 1e-18 * total:
                break
        return total * math.exp(-z)
    # I_n(z) ~ (2 pi z)^(-1/2) sum_k (-1)^k a_k(n) / z^k, a_k from DLMF 10.40.1
    mu = 4.0 * order * order
    term = 1.0
    total = term
    for k in range(1, 60):
        factor = -(mu - (2 * k - 1) ** 2) / (8.0 * k * z)
        nxt = term * factor
        if abs(nxt) >= abs(term):
            break  # asymptotic tail started to grow; stop at the smallest term
        term = nxt
        total += term
        if abs(term) <= 1e-18 * abs(total):
            break
    return total / math.sqrt(2.0 * math.pi * z)


def _as_point(spec: BasisSpec, x) -> np.ndarray:
    pt = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if pt.shape != (spec.dim,):
        raise ParameterError(f"point must have length {spec.dim}, got shape {pt.shape}")
    return pt + np.asarray(spec.shift)


def mehler_kernel(spec: BasisSpec, x, y) -> float:
    """d-dimensional Mehler kernel in closed form (all-Hermite spec).

    k(x, y) = (2 pi)^-d (1-rho^2)^(-d/2)
              exp(-(||x||^2 + ||y||^2 - 2 rho <x, y>) / (2 (1-rho^2)))
              W(x)^(beta-1) W(y)^(beta-1)
    """
    if not all(isinstance(f, Hermite) for f in spec.families):
        raise ParameterError("mehler_kernel requires an all-Hermite spec")
    rho = spec.rho
    xs, ys = _as_point(spec, x), _as_point(spec, y)
    d = spec.dim
    quad = float(xs @ xs + ys @ ys - 2.0 * rho * (xs @ ys))
    log_k = (
        -d * math.log(2.0 * math.pi)
        - 0.5 * d * math.log1p(-rho * rho)
        - quad / (2.0 * (1.0 - rho * rho))
        + (spec.beta - 1.0) * float(np.sum(log_weight(Hermite(), xs) + log_weight(Hermite(), ys)))
    )
    return math.exp(log_k)


def kernel_sup_norm(spec: BasisSpec) -> float:
    """sup_x sqrt(k(x, x)) of the Mehler kernel: (2 pi)^(-beta d/2) (1-rho^2)^(-d/4).

    No closed-form sup norm is available for the Laguerre (Hille-Hardy) case;
    use :func:`hille_hardy_diag_max` for a numerical bound instead.
    """
    if not all(isinstance(f, Hermite) for f in spec.families):
        raise ParameterError("kernel_sup_norm has a closed form only for all-Hermite specs")
    d = spec.dim
    return (2.0 * math.pi) ** (-0.5 * spec.beta * d) * (1.0 - spec.rho**2) ** (-0.25 * d)


def hille_hardy_kernel(spec: BasisSpec, x, y) -> float:
    """d-dimensional generalized Hille-Hardy kernel (all-Laguerre spec).

    k(x, y) = rho^(-||theta||_1/2) (1-rho)^-d
              exp(-(1+rho)/(2(1-rho)) ||x + y||_1)
              G(x)^(beta-1/2) G(y)^(beta-1/2)
              prod_i I_theta_i(2 sqrt(x_i y_i rho) / (1-rho))
    """
    if not all(isinstance(f, Laguerre) for f in spec.families):
        raise ParameterError("hille_hardy_kernel requires an all-Laguerre spec")
    rho = spec.rho
    xs, ys = _as_point(spec, x), _as_point(spec, y)
    if np.any(xs < 0) or np.any(ys < 0):
        raise DomainError("hille_hardy_kernel requires non-negative (shifted) coordinates")
    log_k = -0.5 * sum(f.theta for f in spec.families) * math.log(rho) - spec.dim * math.log1p(-rho)
    log_k -= (1.0 + rho) / (2.0 * (1.0 - rho)) * float(np.sum(xs + ys))
    for i, fam in enumerate(spec.families):
        log_k += (spec.beta - 0.5) * (float(log_weight(fam, xs[i])) + float(log_weight(fam, ys[i])))
        z = 2.0 * math.sqrt(xs[i] * ys[i] * rho) / (1.0 - rho)
        scaled = modified_bessel_scaled(fam.theta, z)
        if scaled == 0.0:
            return 0.0
        log_k += z + math.log(scaled)
    if log_k == -math.inf:
        return 0.0
    return math.exp(log_k)


def truncated_mercer_sum(spec: BasisSpec, x, y) -> float:
    """Truncated Mercer series sum_{||m||_1 <= order} rho^||m||_1 Psi_m(x) Psi_m(y)."""
    xs, ys = _as_point(spec, x), _as_point(spec, y)
    for i, fam in enumerate(spec.families):
        if isinstance(fam, Laguerre) and (xs[i] < 0 or ys[i] < 0):
            raise DomainError(f"coordinate {i}: negative shifted value violates the Laguerre domain")
    indices = spec.multi_indices()
    tx = []
    ty = []
    wx = 0.0
    wy = 0.0
    for i, fam in enumerate(spec.families):
        deg = spec.axis_degree(i)
        tx.append(poly_table(fam, deg, xs[i : i + 1])[0])
        ty.append(poly_table(fam, deg, ys[i : i + 1])[0])
        wx += float(log_weight(fam, xs[i]))
        wy += float(log_weight(fam, ys[i]))
    with np.errstate(over="ignore"):
        weight_prod = math.exp(spec.beta * (wx + wy)) if wx + wy > -math.inf else 0.0
    total = 0.0
    for m in indices:
        prod = spec.rho ** int(m.sum())
        for i in range(spec.dim):
            prod *= tx[i][m[i]] * ty[i][m[i]]
        total += prod
    return total * weight_prod


def hille_hardy_diag_max(spec: BasisSpec, x_max: float = 200.0, n: int = 4001) -> float:
    """Numerical grid bound on k(x, x) for the Hille-Hardy kernel.

    The paper-backed closed-form sup norm exists only for the Mehler kernel;
    this grid search over [0, x_max]^d (evaluated per axis and multiplied,
    using the product structure of the kernel diagonal) is the Laguerre
    substitute.
    """
    if not all(isinstance(f, Laguerre) for f in spec.families):
        raise ParameterError("hille_hardy_diag_max requires an all-Laguerre spec")
    grid = np.linspace(0.0, x_max, n)
    best = 1.0
    for i, fam in enumerate(spec.families):
        sub = BasisSpec(families=(fam,), order=spec.order, beta=spec.beta, rho=spec.rho)
        vals = [hille_hardy_kernel(sub, [g], [g]) for g in grid]
        best *= max(vals)
    return best
