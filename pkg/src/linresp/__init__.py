"""Kernel-embedding density estimation and FDT linear-response statistics.

The package estimates equilibrium densities of ergodic SDEs by expanding them
in orthogonal-polynomial bases (Hermite / Laguerre) whose Mercer-type kernels
(Mehler, Hille-Hardy) define the underlying RKHS, and turns the estimates
into fluctuation-dissipation response curves validated against analytically
known equilibria and a KDE baseline.
"""

from .basis import (
    BasisSpec,
    Hermite,
    Laguerre,
    default_shift,
    enumerate_multi_indices,
    eval_basis_function,
    eval_poly,
    eval_poly_derivative,
    eval_weight,
    excess_kurtosis,
    suggest_laguerre_theta,
)
from .density import (
    DensityEstimate,
    KdeEstimate,
    SelectionDiagnostics,
    diagnostics_sweep,
    error_bound,
    eval_density,
    eval_density_batch,
    eval_density_gradient,
    eval_density_gradient_batch,
    eval_kde,
    eval_kde_batch,
    eval_kde_gradient,
    eval_kde_gradient_batch,
    fit_embedding,
    fit_kde,
    load_density,
    save_density,
    select_delta,
)
from .errors import (
    ConfigError,
    DomainError,
    LinrespError,
    NumericsError,
    ParameterError,
    RejectedPointError,
)
from .kernels import (
    hille_hardy_kernel,
    kernel_sup_norm,
    mehler_kernel,
    modified_bessel_scaled,
    truncated_mercer_sum,
)
from .response import (
    ConjugateField,
    Forcing,
    ResponseCurve,
    conjugate_analytic,
    conjugate_embedded,
    conjugate_kde,
    constant_forcing,
    identity_observable,
    normalize_diagonal,
    response_mc,
    second_moment_check,
)
from .sde import (
    EquilibriumDensity,
    MorsePotential,
    SampleSeries,
    TripleWellPotential,
    analytic_equilibrium,
    bump_function,
    simulate_gradient_system,
    simulate_langevin,
)

__version__ = "0.1.0"
