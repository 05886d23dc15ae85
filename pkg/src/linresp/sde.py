"""Benchmark SDE systems, integrators, and analytic equilibrium densities.

Two systems are built in:

* a two-dimensional gradient diffusion dx = -grad V dt + sqrt(2 kBT) dW with
  a triple-well potential (three smooth bumps plus a quadratic retaining
  term), integrated by the two-stage weak trapezoidal scheme (theta = 1/2)
  with Euler-Maruyama available as an independent cross-check;

* a one-dimensional Langevin system xdot = v, vdot = -U'(x) - gamma v +
  sqrt(2 gamma kBT) Wdot with a Morse potential plus quadratic retainer,
  integrated by the symmetric BAOAB operator splitting.

Both admit Gibbs equilibrium densities known up to normalization; the
normalizer is computed once by nested tensor-grid trapezoid quadrature with
automatic box expansion.

Noise comes from a counter-based Philox generator: one seed = one stream, so
identical seeds give bit-identical trajectories, and distinct seeds give
independent trajectories safe to generate concurrently.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NumericsError, ParameterError

DEFAULT_BURN_IN = 100_000
_BUMP_GUARD = 1e-12  # keeps exp(1/(z^2 - a^2)) off the support boundary
_NOISE_CHUNK = 1 << 16

_MAGIC = b"FDTSAMP1"
_HEADER = struct.Struct("<8sIQdQ28x")  # magic, u32 d, u64 N, f64 dt_eff, u64 seed, reserved
assert _HEADER.size == 64


def bump_function(z, a: float = 1.0):
    """Smooth bump v(z) = 10 exp(1/(z^2 - a^2)) on (-a, a), zero outside.

    A guard band of 1e-12 treats |z| within 1e-12 of a as outside, preventing
    overflow of the essential singularity at the support boundary.
    """
    z = np.asarray(z, dtype=np.float64)
    inside = np.abs(z) < a - _BUMP_GUARD
    out = np.zeros_like(z)
    zz = z[inside]
    out[inside] = 10.0 * np.exp(1.0 / (zz * zz - a * a))
    return float(out) if out.ndim == 0 else out


def bump_derivative(z, a: float = 1.0):
    """dv/dz of the bump: v(z) * (-2 z / (z^2 - a^2)^2) inside the support."""
    z = np.asarray(z, dtype=np.float64)
    inside = np.abs(z) < a - _BUMP_GUARD
    out = np.zeros_like(z)
    zz = z[inside]
    q = zz * zz - a * a
    out[inside] = 10.0 * np.exp(1.0 / q) * (-2.0 * zz / (q * q))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class TripleWellPotential:
    """Triple-well potential on R^2: three bumps of depth-asymmetry ``gamma``
    at the corners of an equilateral triangle with side 2a, plus the quadratic
    retainer 0.8 [(x1 - a)^2 + (x2 - a/sqrt(3))^2] centered at the centroid."""

    a: float = 1.0
    kBT: float = 1.5
    gamma: float = 0.25

    dim = 2

    def _centers(self):
        a = self.a
        return ((0.0, 0.0, 1.0), (2.0 * a, 0.0, 1.0 - self.gamma), (a, math.sqrt(3.0) * a, 1.0 + self.gamma))

    def value(self, x) -> np.ndarray:
        X = np.asarray(x, dtype=np.float64)
        x1, x2 = X[..., 0], X[..., 1]
        a = self.a
        v = 0.8 * ((x1 - a) ** 2 + (x2 - a / math.sqrt(3.0)) ** 2)
        for cx, cy, depth in self._centers():
            v = v - depth * bump_function((x1 - cx) ** 2 + (x2 - cy) ** 2, a)
        return v

    def gradient(self, x) -> np.ndarray:
        X = np.asarray(x, dtype=np.float64)
        x1, x2 = X[..., 0], X[..., 1]
        a = self.a
        g1 = 1.6 * (x1 - a)
        g2 = 1.6 * (x2 - a / math.sqrt(3.0))
        for cx, cy, depth in self._centers():
            z = (x1 - cx) ** 2 + (x2 - cy) ** 2
            dv = bump_derivative(z, a)
            g1 = g1 - depth * dv * 2.0 * (x1 - cx)
            g2 = g2 - depth * dv * 2.0 * (x2 - cy)
        return np.stack([g1, g2], axis=-1)

    def gradient_scalar(self, x1: float, x2: float) -> tuple[float, float]:
        # scalar fast path for the integrator hot loop
        a = self.a
        aa = a * a
        g1 = 1.6 * (x1 - a)
        g2 = 1.6 * (x2 - a * 0.5773502691896258)
        for cx, cy, depth in ((0.0, 0.0, 1.0), (2.0 * a, 0.0, 1.0 - self.gamma),
                              (a, 1.7320508075688772 * a, 1.0 + self.gamma)):
            dx = x1 - cx
            dy = x2 - cy
            z = dx * dx + dy * dy
            if z < a - _BUMP_GUARD:
                q = z * z - aa
                dv = 10.0 * math.exp(1.0 / q) * (-2.0 * z / (q * q))
                g1 -= depth * dv * 2.0 * dx
                g2 -= depth * dv * 2.0 * dy
        return g1, g2

    def start_point(self) -> tuple[float, float]:
        return (self.a, self.a / math.sqrt(3.0))


@dataclass(frozen=True)
class MorsePotential:
    """Morse potential with quadratic retainer: U(x) = U0(a (x - x0)),
    U0(y) = epsilon (exp(-2y) - 2 exp(-y) + 0.03 y^2).  ``gamma`` is the
    Langevin damping coefficient paired with this potential."""

    epsilon: float = 0.2
    a: float = 10.0
    x0: float = 0.0
    kBT: float = 1.0
    gamma: float = 0.5

    def value(self, x) -> np.ndarray:
        y = self.a * (np.asarray(x, dtype=np.float64) - self.x0)
        return self.epsilon * (np.exp(-2.0 * y) - 2.0 * np.exp(-y) + 0.03 * y * y)

    def force(self, x) -> np.ndarray:
        """U'(x)."""
        y = self.a * (np.asarray(x, dtype=np.float64) - self.x0)
        return self.a * self.epsilon * (-2.0 * np.exp(-2.0 * y) + 2.0 * np.exp(-y) + 0.06 * y)

    def force_scalar(self, x: float) -> float:
        y = self.a * (x - self.x0)
        e = math.exp(-y)
        return self.a * self.epsilon * (2.0 * e * (1.0 - e) + 0.06 * y)

    def start_point(self) -> tuple[float, float]:
        return (self.x0, 0.0)


@dataclass
class SampleSeries:
    """Stationary subsampled time series: N x d samples with effective step
    ``dt_effective`` (integrator step times subsample factor), the RNG seed
    that produced it, and the number of discarded burn-in steps."""

    samples: np.ndarray
    dt_effective: float
    seed: int
    burn_in: int = 0

    def __post_init__(self):
        X = np.ascontiguousarray(np.asarray(self.samples, dtype=np.float64))
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[0] < 1:
            raise ParameterError("SampleSeries needs a non-empty (N, d) sample array")
        if not np.all(np.isfinite(X)):
            raise ParameterError("SampleSeries rows must all be finite")
        if not self.dt_effective > 0:
            raise ParameterError(f"dt_effective must be > 0, got {self.dt_effective}")
        self.samples = X

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def save(self, path) -> None:
        """64-byte header (magic, u32 d, u64 N, f64 dt_effective, u64 seed,
        reserved) followed by row-major little-endian float64 samples."""
        header = _HEADER.pack(_MAGIC, self.dim, self.n_samples, self.dt_effective, self.seed)
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(self.samples.astype("<f8", copy=False).tobytes(order="C"))

    @classmethod
    def load(cls, path) -> "SampleSeries":
        with open(path, "rb") as fh:
            header = fh.read(_HEADER.size)
            if len(header) != _HEADER.size:
                raise ParameterError(f"{path}: truncated sample file header")
            magic, d, n, dt_eff, seed = _HEADER.unpack(header)
            if magic != _MAGIC:
                raise ParameterError(f"{path}: bad magic {magic!r}, expected {_MAGIC!r}")
            data = np.frombuffer(fh.read(8 * n * d), dtype="<f8")
        if data.size != n * d:
            raise ParameterError(f"{path}: expected {n * d} values, found {data.size}")
        return cls(samples=data.reshape(n, d).copy(), dt_effective=dt_eff, seed=seed)

    def to_csv(self, path) -> None:
        head = ",".join(f"x{i + 1}" for i in range(self.dim))
        with open(path, "w") as fh:
            fh.write(head + "\n")
            for row in self.samples:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def _check_sim_args(h, n_steps, subsample, burn_in):
    if not h > 0:
        raise ParameterError(f"step size must be > 0, got {h}")
    if subsample < 1:
        raise ParameterError(f"subsample factor must be >= 1, got {subsample}")
    if burn_in < 0:
        raise ParameterError(f"burn-in must be >= 0, got {burn_in}")
    if n_steps - burn_in < subsample:
        raise ParameterError(
            f"n_steps={n_steps} leaves no recordable steps after burn_in={burn_in} "
            f"(need at least burn_in + subsample); the series would be empty"
        )


class _NoiseStream:
    """Chunked standard normals from a Philox stream, exposed as Python floats."""

    def __init__(self, seed: int):
        self._gen = np.random.Generator(np.random.Philox(seed))
        self._buf: list[float] = []
        self._pos = 0

    def take(self) -> float:
        if self._pos >= len(self._buf):
            self._buf = self._gen.standard_normal(_NOISE_CHUNK).tolist()
            self._pos = 0
        v = self._buf[self._pos]
        self._pos += 1
        return v


def simulate_gradient_system(
    potential,
    h: float,
    n_steps: int,
    subsample: int,
    seed: int,
    *,
    burn_in: int = DEFAULT_BURN_IN,
    method: str = "weak-trapezoidal",
    initial=None,
) -> SampleSeries:
    """Integrate dx = -grad V dt + sqrt(2 kBT) dW on R^2 and record a subsampled series.

    ``n_steps`` counts integrator steps *including* burn-in; every
    ``subsample``-th state after burn-in is recorded, giving
    (n_steps - burn_in) // subsample samples.

    ``method`` selects the two-stage weak trapezoidal scheme (theta = 1/2)
    or ``"euler-maruyama"`` as an independent cross-check integrator.
    """
    _check_sim_args(h, n_steps, subsample, burn_in)
    if method not in ("weak-trapezoidal", "euler-maruyama"):
        raise ParameterError(f"unknown gradient-system integrator {method!r}")
    x1, x2 = (float(initial[0]), float(initial[1])) if initial is not None else potential.start_point()
    sigma = math.sqrt(2.0 * potential.kBT)
    noise = _NoiseStream(seed)
    grad = potential.gradient_scalar
    n_record = (n_steps - burn_in) // subsample
    out = np.empty((n_record, 2))
    hh = 0.5 * h
    step = 0
    try:
        if method == "weak-trapezoidal":
            s = sigma * math.sqrt(hh)  # both stages use variance h/2 at theta = 1/2
            for k in range(n_record):
                limit = burn_in + (k + 1) * subsample
                while step < limit:
                    g1, g2 = grad(x1, x2)
                    y1 = x1 - hh * g1 + s * noise.take()
                    y2 = x2 - hh * g2 + s * noise.take()
                    gy1, gy2 = grad(y1, y2)
                    x1 = y1 - hh * (2.0 * gy1 - g1) + s * noise.take()
                    x2 = y2 - hh * (2.0 * gy2 - g2) + s * noise.take()
                    step += 1
                out[k, 0] = x1
                out[k, 1] = x2
                if not (math.isfinite(x1) and math.isfinite(x2)):
                    raise NumericsError(f"gradient-system trajectory blew up by step {step}")
        else:
            s = sigma * math.sqrt(h)
            for k in range(n_record):
                limit = burn_in + (k + 1) * subsample
                while step < limit:
                    g1, g2 = grad(x1, x2)
                    x1 = x1 - h * g1 + s * noise.take()
                    x2 = x2 - h * g2 + s * noise.take()
                    step += 1
                out[k, 0] = x1
                out[k, 1] = x2
                if not (math.isfinite(x1) and math.isfinite(x2)):
                    raise NumericsError(f"gradient-system trajectory blew up by step {step}")
    except OverflowError:
        raise NumericsError(f"gradient-system trajectory blew up by step {step}") from None
    return SampleSeries(samples=out, dt_effective=h * subsample, seed=seed, burn_in=burn_in)


def simulate_langevin(
    potential: MorsePotential,
    h: float,
    n_steps: int,
    subsample: int,
    seed: int,
    *,
    burn_in: int = DEFAULT_BURN_IN,
    initial=None,
) -> SampleSeries:
    """Integrate the Langevin system by symmetric BAOAB operator splitting.

    Output columns are (x, v); ``n_steps`` includes burn-in as in
    :func:`simulate_gradient_system`.
    """
    _check_sim_args(h, n_steps, subsample, burn_in)
    x, v = (float(initial[0]), float(initial[1])) if initial is not None else potential.start_point()
    gamma, kBT = potential.gamma, potential.kBT
    c1 = math.exp(-gamma * h)
    c2 = math.sqrt(kBT * (1.0 - c1 * c1))
    hh = 0.5 * h
    force = potential.force_scalar
    noise = _NoiseStream(seed)
    n_record = (n_steps - burn_in) // subsample
    out = np.empty((n_record, 2))
    step = 0
    try:
        for k in range(n_record):
            limit = burn_in + (k + 1) * subsample
            while step < limit:
                v -= hh * force(x)
                x += hh * v
                v = c1 * v + c2 * noise.take()
                x += hh * v
                v -= hh * force(x)
                step += 1
            out[k, 0] = x
            out[k, 1] = v
            if not (math.isfinite(x) and math.isfinite(v)):
                raise NumericsError(f"Langevin trajectory blew up by step {step}")
    except OverflowError:
        raise NumericsError(f"Langevin trajectory blew up by step {step}") from None
    return SampleSeries(samples=out, dt_effective=h * subsample, seed=seed, burn_in=burn_in)


@dataclass
class EquilibriumDensity:
    """Analytic equilibrium density: unnormalized log density, its gradient,
    and the normalizer log_Z computed once (lazily) by quadrature.

    Conjugate-variable construction touches only ``gradient_log``; the
    quadrature runs the first time an absolute density value is requested.
    """

    log_unnormalized: Callable[[np.ndarray], np.ndarray]
    gradient_log: Callable[[np.ndarray], np.ndarray]
    dim: int
    _log_z_thunk: Callable[[], float] | None = None
    _log_z: float | None = None

    @property
    def log_Z(self) -> float:
        if self._log_z is None:
            if self._log_z_thunk is None:
                raise ParameterError("EquilibriumDensity has no normalizer and no way to compute one")
            self._log_z = self._log_z_thunk()
        return self._log_z

    def log_density(self, x) -> np.ndarray:
        return self.log_unnormalized(np.asarray(x, dtype=np.float64)) - self.log_Z

    def density(self, x) -> np.ndarray:
        return np.exp(self.log_density(x))


_trapezoid = getattr(np, "trapezoid", None) or np.trapz


def _tensor_trapezoid_logZ(log_f, lo, hi, n: int) -> float:
    d = len(lo)
    axes = [np.linspace(lo[i], hi[i], n) for i in range(d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    grid = np.stack(mesh, axis=-1)
    lf = log_f(grid)
    peak = float(np.max(lf))
    vals = np.exp(lf - peak)
    for i in range(d):
        vals = _trapezoid(vals, axes[i], axis=0)
    return peak + math.log(float(vals))


def _boundary_ok(log_f, lo, hi, d, n=65) -> bool:
    axes = [np.linspace(lo[i], hi[i], n) for i in range(d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    grid = np.stack(mesh, axis=-1)
    lf = log_f(grid)
    peak = float(np.max(lf))
    edge = np.zeros(lf.shape, dtype=bool)
    for i in range(d):
        sl = [slice(None)] * d
        sl[i] = 0
        edge[tuple(sl)] = True
        sl[i] = -1
        edge[tuple(sl)] = True
    return float(np.max(lf[edge])) - peak < math.log(1e-12)


def analytic_equilibrium(potential, *, box_halfwidth: float = 4.0) -> EquilibriumDensity:
    """Gibbs equilibrium density of a built-in system.

    For a gradient system (anything exposing ``value``/``gradient``/``kBT``):
    p_eq ∝ exp(-V(x)/kBT) with gradient_log = -grad V / kBT.  For a
    :class:`MorsePotential` the state is (x, v) and p_eq ∝
    exp(-(U(x) + v^2/2)/kBT) with gradient_log = -(U'(x), v)/kBT.

    log_Z comes from tensor-grid trapezoid quadrature on a box auto-expanded
    (at most 4 doublings) until the boundary density is below 1e-12 of the
    peak, refined until two nested resolutions agree to 1e-9 relative.
    """
    if isinstance(potential, MorsePotential):
        d = 2
        kBT = potential.kBT

        def log_unnorm(X):
            X = np.asarray(X, dtype=np.float64)
            return -(potential.value(X[..., 0]) + 0.5 * X[..., 1] ** 2) / kBT

        def grad_log(X):
            X = np.asarray(X, dtype=np.float64)
            return np.stack([-potential.force(X[..., 0]) / kBT, -X[..., 1] / kBT], axis=-1)

        center = np.array(potential.start_point())
    else:
        d = potential.dim
        kBT = potential.kBT

        def log_unnorm(X):
            return -potential.value(X) / kBT

        def grad_log(X):
            return -potential.gradient(X) / kBT

        center = np.array(getattr(potential, "start_point", lambda: (0.0,) * d)(), dtype=np.float64)

    def compute_log_z() -> float:
        w = box_halfwidth
        for _ in range(5):  # initial box plus at most 4 expansions
            lo = center - w
            hi = center + w
            if _boundary_ok(log_unnorm, lo, hi, d):
                break
            w *= 2.0
        else:
            raise NumericsError("equilibrium quadrature box did not capture the density after 4 expansions")
        log_z_prev = _tensor_trapezoid_logZ(log_unnorm, lo, hi, 257)
        for n in (513, 1025, 2049, 4097):
            log_z = _tensor_trapezoid_logZ(log_unnorm, lo, hi, n)
            if abs(log_z - log_z_prev) < 1e-9:
                return log_z
            log_z_prev = log_z
        raise NumericsError("equilibrium quadrature did not converge under refinement")

    return EquilibriumDensity(
        log_unnormalized=log_unnorm, gradient_log=grad_log, dim=d, _log_z_thunk=compute_log_z
    )
