"""Command-line interface.

Subcommands cover the full workflow: simulate panels, summarize them, fit
effect curves (point estimates or uniform bands), recover time effects, and
run Monte Carlo coverage studies.  Every command writes its outputs plus a
manifest.json recording the resolved configuration and its digest; rerunning
with the same configuration reproduces the output files byte for byte.

Exit codes: 0 success, 2 configuration error, 3 data error,
4 numerical failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .basis import BasisSpec, make_spec, spec_digest
from .dgp import (
    dgp_from_dict,
    dgp_to_dict,
    simulate,
    time_homogeneity_check,
    true_effect,
)
from .effects import DEFAULT_TE_TAUS, EffectPipeline, EvalGrid, default_grid
from .errors import ConfigError, DataError, NumericalError
from .inference import bootstrap_curves, coverage_study, uniform_band
from .panel import load_csv, summarize, write_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


# ---------------------------------------------------------------------------
# option parsing helpers


def _parse_taus(text: str) -> np.ndarray:
    """Quantile levels from 'a,b,c' or 'lo:hi:count'."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"tau range must be lo:hi:count, got {text!r}")
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
        return np.linspace(lo, hi, count)
    return np.asarray([float(v) for v in text.split(",")], dtype=float)


def _parse_dgp(text: str) -> object:
    """DGP spec from inline JSON or a JSON file path."""
    if text.lstrip().startswith("{"):
        return dgp_from_dict(json.loads(text))
    with open(text) as fh:
        return dgp_from_dict(json.load(fh))


def _load_config(path):
    if path is None:
        return {}
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    return cfg


def _resolve(args: argparse.Namespace, cfg: dict) -> dict:
    """Merge: command-line flags (when given) override config-file values."""
    resolved = dict(cfg)
    for key, value in vars(args).items():
        if key in ("func", "config"):
            continue
        if value is not None:
            resolved[key] = value
    return resolved


def _get(resolved: dict, key: str, default):
    return resolved.get(key, default)


def _load_data(resolved: dict):
    path = resolved.get("data")
    if not path:
        raise ConfigError("a --data CSV is required for this command")
    column_map = resolved.get("column_map")
    if isinstance(column_map, str):
        column_map = json.loads(column_map)
    return load_csv(path, column_map)


def _make_basis(resolved: dict, data) -> BasisSpec:
    return make_spec(
        kind=_get(resolved, "basis", "bspline"),
        reference=data.pooled_x(),
        structure=_get(resolved, "structure", "additive"),
        degree=int(_get(resolved, "degree", 2)),
        intercept=True,
        orthogonalize=not bool(_get(resolved, "raw_polynomial", False)),
    )


def _make_grid(resolved: dict, data) -> EvalGrid:
    taus = resolved.get("taus")
    if isinstance(taus, str):
        taus = _parse_taus(taus)
    elif isinstance(taus, list):
        taus = np.asarray(taus, dtype=float)
    span = _get(resolved, "grid_quantiles", "0.10,0.90")
    if isinstance(span, str):
        lo, hi = (float(v) for v in span.split(","))
    else:
        lo, hi = (float(v) for v in span)
    return default_grid(
        data,
        n_x=int(_get(resolved, "grid_nx", 101)),
        x_quantiles=(lo, hi),
        taus=taus,
    )


def _out_dir(resolved: dict) -> str:
    out = _get(resolved, "out", ".")
    os.makedirs(out, exist_ok=True)
    return out


def _config_digest(resolved: dict) -> str:
    canon = json.dumps(resolved, sort_keys=True, default=str)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _write_manifest(out: str, command: str, resolved: dict, outputs: list) -> None:
    manifest = {
        "command": command,
        "config": {k: v for k, v in sorted(resolved.items()) if k != "func"},
        "config_digest": _config_digest(resolved),
        "outputs": sorted(outputs),
        "version": __version__,
    }
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _write_json(out: str, name: str, payload) -> str:
    path = os.path.join(out, name)
    with open(path, "w") as fh:
        if hasattr(payload, "to_json"):
            fh.write(payload.to_json())
        else:
            json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return name


def _write_curve(out: str, stem: str, curve) -> list:
    curve.write_csv(os.path.join(out, stem + ".csv"))
    _write_json(out, stem + ".json", curve)
    return [stem + ".csv", stem + ".json"]


def _pipeline(resolved: dict, data, spec, grid, kind: str) -> EffectPipeline:
    te_taus = resolved.get("te_taus", DEFAULT_TE_TAUS)
    if isinstance(te_taus, str):
        te_taus = tuple(float(v) for v in te_taus.split(","))
    else:
        te_taus = tuple(float(v) for v in te_taus)
    if len(te_taus) != 3:
        raise ConfigError("te_taus needs exactly three levels: spread-high, spread-low, center")
    return EffectPipeline(
        data=data,
        spec=spec,
        grid=grid,
        kind=kind,
        te_route=_get(resolved, "te_route", "moments"),
        te_taus=te_taus,
        transform=_get(resolved, "transform", "difference"),
        lam=float(_get(resolved, "lam", 0.0)),
        pi=float(_get(resolved, "pi", 1.0)),
        measure=_get(resolved, "measure", "pooled"),
        avg_source=_get(resolved, "avg_source", "quantile-te"),
    )


# ---------------------------------------------------------------------------
# subcommand implementations


def _cmd_simulate(args):
    cfg = _load_config(args.config)
    resolved = _resolve(args, cfg)
    if "dgp" not in resolved:
        raise ConfigError("simulate needs --dgp (inline JSON or a file path)")
    spec = _parse_dgp(resolved["dgp"]) if isinstance(resolved["dgp"], str) \
        else dgp_from_dict(resolved["dgp"])
    n = int(_get(resolved, "n", 1000))
    seed = int(_get(resolved, "seed", 0))
    out = _out_dir(resolved)
    data = simulate(spec, n, seed)
    write_csv(data, os.path.join(out, "panel.csv"))
    outputs = ["panel.csv", _write_json(out, "dgp.json", dgp_to_dict(spec))]
    _write_manifest(out, "simulate", resolved, outputs)
    print(f"simulated {n} units ({int(data.stayer_mask.sum())} stayers) -> {out}/panel.csv")
    return EXIT_OK


def _cmd_summarize(args):
    cfg = _load_config(args.config)
    resolved = _resolve(args, cfg)
    data, log = _load_data(resolved)
    out = _out_dir(resolved)
    report = summarize(data)
    outputs = [
        _write_json(out, "summary.json", report),
        _write_json(out, "ingest_log.json", log.to_dict()),
    ]
    if bool(_get(resolved, "homogeneity", False)):
        outputs.append(_write_json(out, "homogeneity.json",
                                   time_homogeneity_check(data).to_dict()))
    _write_manifest(out, "summarize", resolved, outputs)
    print(report.to_json())
    return EXIT_OK


def _run_point(args, kind: str, command: str, stem: str):
    cfg = _load_config(args.config)
    resolved = _resolve(args, cfg)
    data, _ = _load_data(resolved)
    spec = _make_basis(resolved, data)
    grid = _make_grid(resolved, data)
    pipeline = _pipeline(resolved, data, spec, grid, kind)
    curve = pipeline.point()
    out = _out_dir(resolved)
    outputs = _write_curve(out, stem, curve)
    outputs.append(_write_json(out, "basis.json", spec))
    _write_manifest(out, command, resolved, outputs)
    print(f"{command}: wrote {stem}.csv ({curve.n_points} points, basis {spec_digest(spec)})")
    return EXIT_OK


def _cmd_fit_mean(args):
    return _run_point(args, "mean", "fit-mean", "mean_effect")


def _cmd_fit_quantile(args):
    return _run_point(args, "quantile", "fit-quantile", "quantile_effect")


def _cmd_time_effects(args):
    cfg = _load_config(args.config)
    resolved = _resolve(args, cfg)
    data, _ = _load_data(resolved)
    spec = _make_basis(resolved, data)
    grid = _make_grid(resolved, data)
    scale = _pipeline(resolved, data, spec, grid, "scale").point()
    shift = _pipeline(resolved, data, spec, grid, "shift").point()
    out = _out_dir(resolved)
    outputs = _write_curve(out, "scale", scale) + _write_curve(out, "shift", shift)
    outputs.append(_write_json(out, "basis.json", spec))
    _write_manifest(out, "time-effects", resolved, outputs)
    print(f"time-effects ({scale.meta.get('route', '?')}): wrote scale.csv, shift.csv")
    return EXIT_OK


def _cmd_effects(args):
    kind = args.kind or "mean"
    stem = kind.replace("-", "_") + "_effect"
    return _run_point(args, kind, "effects", stem)


def _cmd_bands(args):
    cfg = _load_config(args.config)
    resolved = _resolve(args, cfg)
    data, _ = _load_data(resolved)
    spec = _make_basis(resolved, data)
    grid = _make_grid(resolved, data)
    kind = _get(resolved, "kind", "mean")
    pipeline = _pipeline(resolved, data, spec, grid, kind)
    run = bootstrap_curves(
        pipeline,
        B=int(_get(resolved, "B", 499)),
        seed=int(_get(resolved, "seed", 0)),
        law=_get(resolved, "law", "exponential"),
        n_jobs=int(_get(resolved, "n_jobs", 1)),
    )
    band = uniform_band(
        run,
        alpha=float(_get(resolved, "alpha", 0.10)),
        se_method=_get(resolved, "se_method", "sd"),
    )
    curve = band.apply(run.point)
    out = _out_dir(resolved)
    stem = kind.replace("-", "_") + "_band"
    outputs = _write_curve(out, stem, curve)
    run.save(os.path.join(out, "bootstrap_run.npz"))
    outputs += ["bootstrap_run.npz", _write_json(out, "basis.json", spec)]
    _write_manifest(out, "bands", resolved, outputs)
    print(
        f"bands: {kind}, B={run.B}, t-crit={band.t_crit:.4f}, "
        f"{len(run.failures)} retried draws -> {stem}.csv"
    )
    return EXIT_OK


def _cmd_diff_effect(args):
    cfg = _load_config(args.config)
    resolved = _resolve(args, cfg)
    resolved.setdefault("grid_nx", 21)  # Cartesian pair grid: keep it modest
    data, _ = _load_data(resolved)
    spec = _make_basis(resolved, data)
    grid = _make_grid(resolved, data)
    pipeline = _pipeline(resolved, data, spec, grid, "transformed")
    curve = pipeline.point()
    out = _out_dir(resolved)
    outputs = _write_curve(out, "transformed_effect", curve)
    outputs.append(_write_json(out, "basis.json", spec))
    _write_manifest(out, "diff-effect", resolved, outputs)
    print(
        f"diff-effect ({curve.meta['transform']}): wrote transformed_effect.csv; "
        f"note: {curve.meta['requires']}"
    )
    return EXIT_OK


def _cmd_cross_section(args):
    kind = "cross-section-quantile" if (args.kind == "quantile") else "cross-section-mean"
    stem = kind.replace("-", "_")
    return _run_point(args, kind, "cross-section", stem)


_MC_KINDS = {
    "additive-linear": ("mean", "quantile"),
    "random-coefficient": ("mean",),
    "location-scale": ("mean-te", "quantile-te"),
}


def _mc_truth(dgp_spec, kind: str):
    """Array of true values aligned with a point curve's index."""
    family = dgp_spec.family
    if kind not in _MC_KINDS.get(family, ()):
        raise ConfigError(
            f"mc supports kinds {_MC_KINDS.get(family)} for family {family!r}, got {kind!r}"
        )

    def truth(curve):
        if family == "additive-linear":
            return np.full(curve.n_points, dgp_spec.theta)
        if family == "random-coefficient":
            return dgp_spec.slope_mean + dgp_spec.slope_x_loading * curve.x
        oracle_kind = "time-averaged-mean" if kind == "mean-te" else "time-averaged-quantile"
        vals = np.empty(curve.n_points)
        for i in range(curve.n_points):
            tau = None if curve.tau is None else float(curve.tau[i])
            vals[i] = true_effect(dgp_spec, float(curve.x[i]), oracle_kind, tau=tau).value
        return vals

    return truth


def _cmd_mc(args):
    cfg = _load_config(args.config)
    resolved = _resolve(args, cfg)
    if "dgp" not in resolved:
        raise ConfigError("mc needs --dgp (inline JSON or a file path)")
    dgp_spec = _parse_dgp(resolved["dgp"]) if isinstance(resolved["dgp"], str) \
        else dgp_from_dict(resolved["dgp"])
    kind = _get(resolved, "kind", "mean")
    n = int(_get(resolved, "n", 2000))
    seed = int(_get(resolved, "seed", 0))

    def simulate_fn(rep_seed):
        return simulate(dgp_spec, n, rep_seed)

    def make_pipeline(data):
        spec = _make_basis(resolved, data)
        grid = _make_grid(resolved, data)
        return _pipeline(resolved, data, spec, grid, kind)

    report = coverage_study(
        simulate_fn,
        make_pipeline,
        _mc_truth(dgp_spec, kind),
        R=int(_get(resolved, "R", 200)),
        B=int(_get(resolved, "B", 199)),
        seed=seed,
        alpha=float(_get(resolved, "alpha", 0.10)),
        law=_get(resolved, "law", "exponential"),
        se_method=_get(resolved, "se_method", "sd"),
        n_jobs=int(_get(resolved, "n_jobs", 1)),
        config={"kind": kind, "n": n, "family": dgp_spec.family},
    )
    out = _out_dir(resolved)
    outputs = [_write_json(out, "coverage.json", report.to_dict())]
    _write_manifest(out, "mc", resolved, outputs)
    print(
        f"mc: coverage {report.coverage:.3f} over R={report.R} reps "
        f"(mean width {report.mean_width:.4f})"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser, data: bool = True):
    p.add_argument("--config", help="JSON file of option defaults")
    p.add_argument("--out", help="output directory (default: .)")
    if data:
        p.add_argument("--data", help="input panel CSV (long: id,t,y,x)")
        p.add_argument("--column-map", dest="column_map",
                       help="JSON mapping canonical column names to file names")


def _add_basis_grid(p: argparse.ArgumentParser):
    p.add_argument("--basis", choices=["bspline", "polynomial"])
    p.add_argument("--degree", type=int)
    p.add_argument("--structure", choices=["additive", "tensor"])
    p.add_argument("--raw-polynomial", dest="raw_polynomial", action="store_const", const=True)
    p.add_argument("--grid-nx", dest="grid_nx", type=int)
    p.add_argument("--grid-quantiles", dest="grid_quantiles")
    p.add_argument("--taus", help="levels 'a,b,c' or range 'lo:hi:count'")


def _add_te(p: argparse.ArgumentParser):
    p.add_argument("--te-route", dest="te_route", choices=["moments", "quantiles"])
    p.add_argument("--te-taus", dest="te_taus",
                   help="three levels: spread-high, spread-low, center")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stayerfx",
        description="Panel effects for stayers: estimation, bands, simulation.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a synthetic panel to CSV")
    _add_common(p, data=False)
    p.add_argument("--dgp", help="DGP spec: inline JSON or a JSON file")
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("summarize", help="moments, within shares, change histogram")
    _add_common(p)
    p.add_argument("--homogeneity", action="store_const", const=True,
                   help="also run the stayer-bin KS homogeneity check")
    p.set_defaults(func=_cmd_summarize)

    p = sub.add_parser("fit-mean", help="mean effect point estimate")
    _add_common(p)
    _add_basis_grid(p)
    p.set_defaults(func=_cmd_fit_mean)

    p = sub.add_parser("fit-quantile", help="quantile effect point estimate")
    _add_common(p)
    _add_basis_grid(p)
    p.set_defaults(func=_cmd_fit_quantile)

    p = sub.add_parser("time-effects", help="scale and location-shift functions")
    _add_common(p)
    _add_basis_grid(p)
    _add_te(p)
    p.set_defaults(func=_cmd_time_effects)

    p = sub.add_parser("effects", help="any effect kind, point estimate")
    _add_common(p)
    _add_basis_grid(p)
    _add_te(p)
    p.add_argument("--kind", choices=["mean", "quantile", "mean-te", "quantile-te",
                                      "avg-quantile", "scale", "shift"])
    p.add_argument("--measure", choices=["pooled", "period1", "period2"])
    p.add_argument("--avg-source", dest="avg_source", choices=["quantile", "quantile-te"])
    p.set_defaults(func=_cmd_effects)

    p = sub.add_parser("bands", help="weighted bootstrap + sup-t uniform band")
    _add_common(p)
    _add_basis_grid(p)
    _add_te(p)
    p.add_argument("--kind", choices=["mean", "quantile", "mean-te", "quantile-te",
                                      "avg-quantile", "scale", "shift", "transformed",
                                      "cross-section-mean", "cross-section-quantile"])
    p.add_argument("--B", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--law", choices=["exponential", "multinomial", "degenerate"])
    p.add_argument("--se-method", dest="se_method", choices=["sd", "iqr"])
    p.add_argument("--seed", type=int)
    p.add_argument("--n-jobs", dest="n_jobs", type=int)
    p.add_argument("--measure", choices=["pooled", "period1", "period2"])
    p.add_argument("--avg-source", dest="avg_source", choices=["quantile", "quantile-te"])
    p.set_defaults(func=_cmd_bands)

    p = sub.add_parser("diff-effect",
                       help="quantile effect of a transformed outcome on the pair grid")
    _add_common(p)
    _add_basis_grid(p)
    p.add_argument("--transform", choices=["difference", "period2", "linear-combo"])
    p.add_argument("--lam", type=float)
    p.add_argument("--pi", type=float)
    p.set_defaults(func=_cmd_diff_effect)

    p = sub.add_parser("cross-section", help="per-period comparator (no panel identification)")
    _add_common(p)
    _add_basis_grid(p)
    p.add_argument("--kind", choices=["mean", "quantile"])
    p.set_defaults(func=_cmd_cross_section)

    p = sub.add_parser("mc", help="Monte Carlo coverage of the uniform bands")
    _add_common(p, data=False)
    _add_basis_grid(p)
    _add_te(p)
    p.add_argument("--dgp", help="DGP spec: inline JSON or a JSON file")
    p.add_argument("--kind")
    p.add_argument("--n", type=int)
    p.add_argument("--R", type=int)
    p.add_argument("--B", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--law", choices=["exponential", "multinomial", "degenerate"])
    p.add_argument("--se-method", dest="se_method", choices=["sd", "iqr"])
    p.add_argument("--seed", type=int)
    p.add_argument("--n-jobs", dest="n_jobs", type=int)
    p.set_defaults(func=_cmd_mc)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
