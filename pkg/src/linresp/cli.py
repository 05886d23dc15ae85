"""Batch command-line pipeline: simulate -> fit -> diagnostics -> response -> bench.

Every stage reads one YAML configuration (strictly validated), writes CSV and
JSON artifacts into the output directory, and is deterministic: the same
config and seed produce byte-identical coefficient and response files at any
worker count.  Exit codes: 0 success, 2 configuration error, 3 numeric
failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .basis import excess_kurtosis, suggest_laguerre_theta, Laguerre
from .density import (
    DensityEstimate,
    diagnostics_sweep,
    eval_density_batch,
    fit_embedding,
    fit_kde,
    load_density,
    save_density,
    select_delta,
)
from .errors import ConfigError, LinrespError
from .response import (
    ConjugateField,
    conjugate_analytic,
    conjugate_embedded,
    conjugate_kde,
    constant_forcing,
    identity_observable,
    normalize_diagonal,
    response_mc,
)
from .sde import MorsePotential, SampleSeries, analytic_equilibrium, simulate_gradient_system, simulate_langevin


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_cfg(args) -> dict:
    raw = cfgmod.load_config(args.config)
    cfg = cfgmod.resolve_config(raw, seed=args.seed)
    if args.paper_scale:
        cfg = cfgmod.apply_paper_scale(cfg)
    if args.out is not None:
        cfg["output"]["directory"] = args.out
    return cfg


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["output"]["directory"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    cfg = _load_cfg(args)
    sysc = cfg["system"]
    if sysc["seed"] is None:
        raise ConfigError("system.seed is required (no default); set it in the config or pass --seed")
    if sysc["n_steps"] <= sysc["burn_in"]:
        raise ConfigError(
            f"system.n_steps ({sysc['n_steps']}) must exceed system.burn_in ({sysc['burn_in']})"
        )
    out = _out_dir(cfg)
    potential = cfgmod.potential_from_config(cfg)
    t0 = time.perf_counter()
    if isinstance(potential, MorsePotential):
        series = simulate_langevin(
            potential,
            h=float(sysc["h"]),
            n_steps=int(sysc["n_steps"]),
            subsample=int(sysc["subsample"]),
            seed=int(sysc["seed"]),
            burn_in=int(sysc["burn_in"]),
        )
    else:
        series = simulate_gradient_system(
            potential,
            h=float(sysc["h"]),
            n_steps=int(sysc["n_steps"]),
            subsample=int(sysc["subsample"]),
            seed=int(sysc["seed"]),
            burn_in=int(sysc["burn_in"]),
            method=sysc["integrator"],
        )
    elapsed = time.perf_counter() - t0
    series.save(out / "samples.bin")
    if "csv" in cfg["output"]["formats"]:
        series.to_csv(out / "samples.csv")
    _write_json(
        out / "samples_manifest.json",
        {
            "seed": int(sysc["seed"]),
            "system": sysc,
            "n_samples": series.n_samples,
            "dim": series.dim,
            "dt_effective": series.dt_effective,
            "burn_in": series.burn_in,
            "wall_clock_seconds": elapsed,
        },
    )
    print(f"wrote {series.n_samples} samples to {out / 'samples.bin'}")
    return 0


def _grid_points(grid_cfg: dict) -> tuple[list[np.ndarray], np.ndarray]:
    axes = [np.linspace(float(sp[0]), float(sp[1]), int(sp[2])) for _, sp in sorted(grid_cfg.items())]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    return axes, pts


def cmd_fit(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(cfg)
    series = SampleSeries.load(args.samples)
    est_kind = cfg["estimator"]["kind"]
    manifest: dict = {"estimator": est_kind, "n_samples": series.n_samples, "seed": series.seed}
    manifest["excess_kurtosis"] = [float(v) for v in excess_kurtosis(series.samples)]

    est = None
    if est_kind == "embedding":
        spec = cfgmod.basis_spec_from_config(cfg, samples=series)
        est = fit_embedding(series, spec, threads=args.threads)
        selection = select_delta(est, series, floor=float(cfg["estimator"]["delta_floor"]))
        save_density(est, out / "density.txt")
        manifest.update(
            {
                "order": spec.order,
                "n_basis": spec.n_basis,
                "delta_m": selection.delta_m,
                "delta": selection.delta,
                "rejection_fraction": selection.rejection_fraction,
                "shift": list(spec.shift),
            }
        )
        for i, fam in enumerate(spec.families):
            if isinstance(fam, Laguerre):
                shifted = series.samples[:, i] + spec.shift[i]
                manifest[f"suggested_theta_axis{i}"] = suggest_laguerre_theta(shifted)
    elif est_kind == "kde":
        kde = fit_kde(series)
        manifest["bandwidth"] = kde.bandwidth
    else:
        raise ConfigError("cmd fit requires estimator.kind 'embedding' or 'kde'")

    sweep = cfg["estimator"]["sweep"]
    if sweep is not None:
        _run_diagnostics(cfg, series, out, threads=args.threads)
    grid_cfg = cfg["output"]["grid"]
    if grid_cfg is not None and est is not None:
        _export_grid(cfg, est, out)
    _write_json(out / "fit_manifest.json", manifest)
    print(f"fit written to {out}")
    return 0


def _run_diagnostics(cfg: dict, series: SampleSeries, out: Path, threads: int = 1) -> None:
    sweep = cfg["estimator"]["sweep"]
    if sweep is None:
        raise ConfigError("estimator.sweep is required for diagnostics")
    spec = cfgmod.basis_spec_from_config(cfg, samples=series)
    diag = diagnostics_sweep(series, spec, range(int(sweep[0]), int(sweep[1]) + 1))
    with open(out / "diagnostics.csv", "w") as fh:
        fh.write("M,delta_M,R_M,eta_M\n")
        for m, dm, r, e in zip(diag.orders, diag.delta_m, diag.rejection, diag.shell_norm):
            fh.write(f"{int(m)},{dm:.17g},{r:.17g},{e:.17g}\n")


def cmd_diagnostics(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(cfg)
    series = SampleSeries.load(args.samples)
    _run_diagnostics(cfg, series, out, threads=args.threads)
    print(f"diagnostics written to {out / 'diagnostics.csv'}")
    return 0


def _export_grid(cfg: dict, est: DensityEstimate, out: Path) -> None:
    grid_cfg = cfg["output"]["grid"]
    axes_names = sorted(grid_cfg.keys())
    _, pts = _grid_points(grid_cfg)
    cols = {name: pts[:, i] for i, name in enumerate(axes_names)}
    cols["p_est"] = eval_density_batch(est, pts)
    try:
        eq = analytic_equilibrium(cfgmod.potential_from_config(cfg))
        cols["p_eq"] = eq.density(pts)
    except LinrespError:
        pass
    names = list(cols.keys())
    with open(out / "density_grid.csv", "w") as fh:
        fh.write(",".join(names) + "\n")
        for row in zip(*(cols[n] for n in names)):
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def _build_field(source: str, cfg: dict, series: SampleSeries, args) -> ConjugateField:
    forcing = constant_forcing()
    if source == "analytic":
        eq = analytic_equilibrium(cfgmod.potential_from_config(cfg))
        return conjugate_analytic(eq, forcing)
    if source == "embedding":
        if args.estimate is not None:
            est = load_density(args.estimate)
        else:
            spec = cfgmod.basis_spec_from_config(cfg, samples=series)
            est = fit_embedding(series, spec, threads=args.threads)
            select_delta(est, series, floor=float(cfg["estimator"]["delta_floor"]))
        if est.delta <= 0:
            select_delta(est, series, floor=float(cfg["estimator"]["delta_floor"]))
        return conjugate_embedded(est, forcing)
    kde = fit_kde(series)
    return conjugate_kde(kde, forcing)


def cmd_response(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(cfg)
    series = SampleSeries.load(args.samples)
    steps = cfgmod.max_lag_steps_from_config(cfg, series.dt_effective, series.n_samples)
    curves: dict[str, object] = {}
    for source in cfg["response"]["sources"]:
        field = _build_field(source, cfg, series, args)
        curve = response_mc(series, identity_observable, field, steps, threads=args.threads)
        if cfg["response"]["normalize"]:
            curve = normalize_diagonal(curve)
        curve.to_csv(out / f"response_{source}.csv")
        curve.write_metadata(out / f"response_{source}.json")
        curves[source] = curve
        print(f"response ({source}) written to {out / f'response_{source}.csv'}")
    if "analytic" in curves and len(curves) > 1:
        _write_comparison(curves, out)
    return 0


def _write_comparison(curves: dict, out: Path) -> None:
    """Per-entry max-abs gap over lags between each estimated curve and the analytic one."""
    ref = curves["analytic"]
    d_a, d = ref.values.shape[1:]
    with open(out / "response_comparison.csv", "w") as fh:
        fh.write("source,entry,linf_gap\n")
        for source, curve in curves.items():
            if source == "analytic":
                continue
            gaps = np.abs(curve.values - ref.values)
            for i in range(d_a):
                for j in range(d):
                    fh.write(f"{source},k_{i + 1}{j + 1},{gaps[:, i, j].max():.17g}\n")
            fh.write(f"{source},all,{gaps.max():.17g}\n")


def cmd_bench(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(cfg)
    series = SampleSeries.load(args.samples)
    X = series.samples
    spec = cfgmod.basis_spec_from_config(cfg, samples=series)
    if args.estimate is not None:
        est = load_density(args.estimate)
    else:
        est = fit_embedding(series, spec, threads=args.threads)
        select_delta(est, series, floor=float(cfg["estimator"]["delta_floor"]))
    emb_field = conjugate_embedded(est)
    t0 = time.perf_counter()
    emb_field.evaluate(X)
    t_embedding = time.perf_counter() - t0
    kde_field = conjugate_kde(fit_kde(series))
    t0 = time.perf_counter()
    kde_field.evaluate(X)
    t_kde = time.perf_counter() - t0
    payload = {
        "n_samples": series.n_samples,
        "basis_count": est.spec.n_basis,
        "kde_kernel_count": series.n_samples,
        "embedding_seconds": t_embedding,
        "kde_seconds": t_kde,
        "speedup": t_kde / t_embedding if t_embedding > 0 else float("inf"),
    }
    _write_json(out / "bench.json", payload)
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def convolve_forcing(lags: np.ndarray, kernel_values: np.ndarray, forcing: np.ndarray, delta: float) -> np.ndarray:
    """Trapezoid convolution int_0^t k_A(t - s) delta f(s) ds on the lag grid.

    A convenience for turning a response curve plus a scalar forcing history
    into a predicted mean shift; not part of the estimation pipeline.
    """
    lags = np.asarray(lags, dtype=np.float64)
    n = lags.size
    out = np.zeros_like(kernel_values)
    for t in range(n):
        integrand = kernel_values[t::-1] * np.asarray(forcing[: t + 1]).reshape(t + 1, *([1] * (kernel_values.ndim - 1)))
        out[t] = np.trapz(integrand, lags[: t + 1], axis=0) * delta if t > 0 else 0.0
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="linresp",
        description="Simulate benchmark SDEs, fit kernel-embedding densities, and estimate FDT responses.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_samples=False, needs_estimate=False):
        p.add_argument("--config", required=True, help="YAML experiment configuration")
        p.add_argument("--seed", type=int, default=None, help="override system.seed")
        p.add_argument("--threads", type=int, default=1, help="worker-count cap for chunked stages")
        p.add_argument("--out", default=None, help="override output.directory")
        p.add_argument("--paper-scale", action="store_true", help="restore paper-scale sample counts (10x)")
        if needs_samples:
            p.add_argument("samples", help="binary sample file from 'linresp simulate'")
        if needs_estimate:
            p.add_argument("--estimate", default=None, help="density estimate file (default: refit)")

    common(sub.add_parser("simulate", help="integrate the configured SDE and write samples"))
    common(sub.add_parser("fit", help="fit the configured density estimator"), needs_samples=True)
    common(sub.add_parser("diagnostics", help="sweep (delta_M, R_M, eta_M) over orders"), needs_samples=True)
    common(
        sub.add_parser("response", help="estimate response curves for the configured sources"),
        needs_samples=True,
        needs_estimate=True,
    )
    common(
        sub.add_parser("bench", help="time embedding vs KDE conjugate-field evaluation"),
        needs_samples=True,
        needs_estimate=True,
    )
    return parser


_COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "diagnostics": cmd_diagnostics,
    "response": cmd_response,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 2
    except LinrespError as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return 3
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
