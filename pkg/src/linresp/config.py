"""Experiment configuration: YAML with nested sections, strict key checking.

Unknown keys anywhere are hard errors; silent default drift is the main
reproducibility hazard in a pipeline like this.  Every field has a documented
default except the potential kind and the RNG seed.  ``preset:`` fills a full
parameter block (the two benchmark systems) before user keys are applied.

Configurations round-trip losslessly: ``parse(serialize(parse(text)))``
equals ``parse(text)``.
"""

from __future__ import annotations

import copy

import yaml

from .basis import BasisSpec, Hermite, Laguerre, default_shift
from .errors import ConfigError
from .sde import MorsePotential, TripleWellPotential

_COMMON_SYSTEM = {
    "potential": None,
    "integrator": None,
    "h": 1e-3,
    "n_steps": None,
    "subsample": None,
    "burn_in": 100_000,
    "seed": None,
}

_SYSTEM_DEFAULTS = {
    "triple-well": {
        **_COMMON_SYSTEM,
        "a": 1.0,
        "kBT": 1.5,
        "gamma": 0.25,
        "integrator": "weak-trapezoidal",
        "n_steps": 5_100_000,
        "subsample": 5,
    },
    "morse-langevin": {
        **_COMMON_SYSTEM,
        "epsilon": 0.2,
        "a": 10.0,
        "x0": 0.0,
        "kBT": 1.0,
        "gamma": 0.5,
        "integrator": "baoab",
        "n_steps": 10_100_000,
        "subsample": 10,
    },
}

_BASIS_DEFAULTS = {
    "families": ["hermite", "hermite"],
    "theta": None,  # per-axis Laguerre shapes; defaults to zeros
    "beta": 1.0,
    "rho": 0.5,
    "order": 60,
    "degree_caps": None,
    "shift": "auto",
}

_ESTIMATOR_DEFAULTS = {"kind": "embedding", "delta_floor": 1e-7, "sweep": None}

_RESPONSE_DEFAULTS = {
    "observable": "identity",
    "forcing": "constant",
    "max_lag_time": 5.0,
    "max_lag_steps": None,
    "normalize": True,
    "sources": None,  # defaults to [estimator.kind]
}

_OUTPUT_DEFAULTS = {"directory": "out", "formats": ["binary"], "grid": None}

PRESETS = {
    "triple-well": {
        "system": {"potential": "triple-well"},
        "basis": {"families": ["hermite", "hermite"], "order": 60},
        "response": {"max_lag_time": 5.0},
    },
    "langevin": {
        "system": {"potential": "morse-langevin"},
        "basis": {
            "families": ["laguerre", "hermite"],
            "theta": [1, 0],
            "order": 90,
            "degree_caps": [90, 0],
        },
        "response": {"max_lag_time": 10.0},
    },
}

_SECTIONS = ("system", "basis", "estimator", "response", "output")


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        out[k] = copy.deepcopy(v)
    return out


def _check_keys(section: str, given: dict, allowed) -> None:
    unknown = sorted(set(given) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {', '.join(unknown)}")


def load_config(path) -> dict:
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: configuration must be a mapping")
    return raw


def resolve_config(raw: dict, seed: int | None = None) -> dict:
    """Fill defaults (preset first, then user keys), validate strictly."""
    _check_keys("top level", raw, ("preset",) + _SECTIONS)
    preset_name = raw.get("preset")
    preset = {}
    if preset_name is not None:
        if preset_name not in PRESETS:
            raise ConfigError(f"unknown preset {preset_name!r}; available: {sorted(PRESETS)}")
        preset = PRESETS[preset_name]

    sections: dict[str, dict] = {}
    for name in _SECTIONS:
        user = raw.get(name, {})
        if user is None:
            user = {}
        if not isinstance(user, dict):
            raise ConfigError(f"[{name}] must be a mapping")
        sections[name] = _merge(preset.get(name, {}), user)

    system = sections["system"]
    kind = system.get("potential")
    if kind is None:
        raise ConfigError("system.potential is required (no default); set it or use a preset")
    if kind not in _SYSTEM_DEFAULTS:
        raise ConfigError(f"unknown potential {kind!r}; available: {sorted(_SYSTEM_DEFAULTS)}")
    _check_keys("system", system, _SYSTEM_DEFAULTS[kind])
    system = _merge(_SYSTEM_DEFAULTS[kind], system)
    if seed is not None:
        system["seed"] = int(seed)

    _check_keys("basis", sections["basis"], _BASIS_DEFAULTS)
    basis = _merge(_BASIS_DEFAULTS, sections["basis"])
    _check_keys("estimator", sections["estimator"], _ESTIMATOR_DEFAULTS)
    estimator = _merge(_ESTIMATOR_DEFAULTS, sections["estimator"])
    _check_keys("response", sections["response"], _RESPONSE_DEFAULTS)
    response = _merge(_RESPONSE_DEFAULTS, sections["response"])
    _check_keys("output", sections["output"], _OUTPUT_DEFAULTS)
    output = _merge(_OUTPUT_DEFAULTS, sections["output"])

    if estimator["kind"] not in ("embedding", "kde", "analytic"):
        raise ConfigError(f"unknown estimator kind {estimator['kind']!r}")
    if response["sources"] is None:
        response["sources"] = [estimator["kind"]]
    for s in response["sources"]:
        if s not in ("embedding", "kde", "analytic"):
            raise ConfigError(f"unknown response source {s!r}")
    if response["observable"] != "identity":
        raise ConfigError(f"unknown observable {response['observable']!r}")
    if response["forcing"] != "constant":
        raise ConfigError(f"unknown forcing {response['forcing']!r}")
    fams = basis["families"]
    if not isinstance(fams, list) or not fams or any(f not in ("hermite", "laguerre") for f in fams):
        raise ConfigError("basis.families must be a non-empty list of 'hermite' / 'laguerre'")
    if basis["theta"] is not None and len(basis["theta"]) != len(fams):
        raise ConfigError("basis.theta must list one shape per family")
    if basis["degree_caps"] is not None and len(basis["degree_caps"]) != len(fams):
        raise ConfigError("basis.degree_caps must list one cap per family")
    sweep = estimator["sweep"]
    if sweep is not None:
        if not (isinstance(sweep, list) and len(sweep) == 2 and all(isinstance(v, int) for v in sweep)):
            raise ConfigError("estimator.sweep must be [lo, hi] (inclusive integer order range)")
        if not 0 <= sweep[0] <= sweep[1]:
            raise ConfigError("estimator.sweep bounds must satisfy 0 <= lo <= hi")
    grid = output["grid"]
    if grid is not None:
        if not isinstance(grid, dict):
            raise ConfigError("output.grid must map axis names to [lo, hi, n]")
        for ax, spec in grid.items():
            if not (isinstance(spec, list) and len(spec) == 3):
                raise ConfigError(f"output.grid.{ax} must be [lo, hi, n]")

    return {
        "preset": preset_name,
        "system": system,
        "basis": basis,
        "estimator": estimator,
        "response": response,
        "output": output,
    }


def serialize_config(cfg: dict) -> str:
    return yaml.safe_dump(cfg, sort_keys=True, default_flow_style=False)


def apply_paper_scale(cfg: dict) -> dict:
    """Restore paper-scale sampling: 10x the recorded steps after burn-in."""
    out = copy.deepcopy(cfg)
    sysc = out["system"]
    sysc["n_steps"] = int(sysc["burn_in"] + 10 * (sysc["n_steps"] - sysc["burn_in"]))
    return out


def potential_from_config(cfg: dict):
    sysc = cfg["system"]
    if sysc["potential"] == "triple-well":
        return TripleWellPotential(a=float(sysc["a"]), kBT=float(sysc["kBT"]), gamma=float(sysc["gamma"]))
    return MorsePotential(
        epsilon=float(sysc["epsilon"]),
        a=float(sysc["a"]),
        x0=float(sysc["x0"]),
        kBT=float(sysc["kBT"]),
        gamma=float(sysc["gamma"]),
    )


def basis_spec_from_config(cfg: dict, samples=None) -> BasisSpec:
    """Build the BasisSpec; shift 'auto' needs the samples it will be fit on."""
    b = cfg["basis"]
    thetas = b["theta"] or [0] * len(b["families"])
    families = tuple(
        Laguerre(theta=int(t)) if f == "laguerre" else Hermite()
        for f, t in zip(b["families"], thetas)
    )
    if b["shift"] == "auto":
        if samples is None:
            raise ConfigError("basis.shift is 'auto' but no samples were provided to derive it")
        shift = default_shift(families, samples.samples if hasattr(samples, "samples") else samples)
    elif b["shift"] is None:
        shift = None
    else:
        shift = tuple(float(s) for s in b["shift"])
    caps = None if b["degree_caps"] is None else tuple(int(c) for c in b["degree_caps"])
    return BasisSpec(
        families=families,
        order=int(b["order"]),
        beta=float(b["beta"]),
        rho=float(b["rho"]),
        shift=shift,
        degree_caps=caps,
    )


def max_lag_steps_from_config(cfg: dict, dt_effective: float, n_samples: int) -> int:
    r = cfg["response"]
    if r["max_lag_steps"] is not None:
        steps = int(r["max_lag_steps"])
    else:
        steps = int(round(float(r["max_lag_time"]) / dt_effective))
    if steps >= n_samples:
        raise ConfigError(
            f"response lag range ({steps} steps) must be shorter than the series ({n_samples} samples)"
        )
    return max(steps, 0)
