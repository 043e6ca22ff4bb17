"""Command-line surface: simulate, fit, summarize, evaluate, basis.

Configuration is plain INI (configparser) with the sections documented in
the README; every command is a pure function of (input files, config, seed),
so reruns produce byte-identical primary outputs.  Exit codes: 0 success,
2 usage or config error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .data_model import (
    CovariateScheme,
    Dataset,
    GridSpec,
    Region,
    dataset_sidecar,
    filter_shots,
    read_shots_csv,
    write_shots_csv,
)
from .errors import ConfigError, CourtcoxError, DataError, NumericalError
from .evaluation import (
    ConstantIntensity,
    EmpiricalRateIntensity,
    GridIntensity,
    PosteriorMeanIntensity,
    ThetaIntensity,
    npll,
    p_thin_split,
    rmse,
    write_scores_csv,
)
from .kernel_basis import Basis, DomainScale, KernelParams, build_basis_2d
from .sampler import PosteriorSamples, SamplerConfig, run_chain
from .simulator import read_truth_json, synthetic_scenario, write_truth_json
from .summaries import (
    intensity_map,
    probability_density_map,
    relative_risk_map,
    write_contour_json,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


# ---------------------------------------------------------------------------
# Config handling
# ---------------------------------------------------------------------------

def load_config(path) -> tuple[configparser.ConfigParser, str]:
    cfg = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if path is None:
        return cfg, hashlib.sha256(b"").hexdigest()
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    cfg.read_string(raw.decode("utf-8"))
    return cfg, hashlib.sha256(raw).hexdigest()


def _get(cfg, section, key, cast, default=None, required=False):
    if cfg.has_option(section, key) and cfg.get(section, key).strip() != "":
        raw = cfg.get(section, key).strip()
        try:
            if cast is bool:
                return raw.lower() in ("1", "true", "yes", "on")
            return cast(raw)
        except ValueError:
            raise ConfigError(f"[{section}] {key} = {raw!r}: not a valid {cast.__name__}") from None
    if required:
        raise ConfigError(f"config is missing required key [{section}] {key}")
    return default


def region_from_config(cfg, default: Region | None = None) -> Region:
    if cfg.has_section("region"):
        return Region(
            xmin=_get(cfg, "region", "xmin", float, required=True),
            xmax=_get(cfg, "region", "xmax", float, required=True),
            ymin=_get(cfg, "region", "ymin", float, required=True),
            ymax=_get(cfg, "region", "ymax", float, required=True),
        )
    return default if default is not None else Region()


def scheme_from_config(cfg, default: CovariateScheme | None = None) -> CovariateScheme:
    name = _get(cfg, "covariates", "scheme", str)
    if name is not None:
        return CovariateScheme.from_name(name)
    return default if default is not None else CovariateScheme(interaction=True)


def grid_from_config(cfg, region: Region) -> GridSpec:
    # default 1-ft cells on the court frame
    nx = _get(cfg, "grid", "nx", int, default=round(region.xmax - region.xmin))
    ny = _get(cfg, "grid", "ny", int, default=round(region.ymax - region.ymin))
    return GridSpec(region, max(nx, 1), max(ny, 1))


def basis_from_config(cfg, region: Region) -> Basis:
    a = _get(cfg, "kernel", "a", float, default=0.25)
    b = _get(cfg, "kernel", "b", float, default=1.5)
    L = _get(cfg, "kernel", "L", int)
    alpha = _get(cfg, "kernel", "alpha", float)
    if L is None and alpha is None:
        alpha = 0.8
    if L is not None and alpha is not None:
        raise ConfigError("[kernel] give either L or alpha, not both")
    scale = DomainScale.from_bounds(region.xmin, region.xmax, region.ymin, region.ymax)
    return build_basis_2d(KernelParams(a, b), L=L, alpha=alpha, domain_scale=scale)


def sampler_config_from(cfg, seed_override=None) -> SamplerConfig:
    return SamplerConfig(
        iterations=_get(cfg, "sampler", "iterations", int, default=15_000),
        burn_in=_get(cfg, "sampler", "burn_in", int, default=10_000),
        thin=_get(cfg, "sampler", "thin", int, default=1),
        tau0_sq=_get(cfg, "sampler", "tau0_sq", float),
        tau_beta_sq=_get(cfg, "sampler", "tau_beta_sq", float),
        tau_beta_bracketing=_get(cfg, "sampler", "tau_beta_bracketing", str, default="outer"),
        a_sigma=_get(cfg, "sampler", "a_sigma", float, default=5.0),
        b_sigma=_get(cfg, "sampler", "b_sigma", float, default=5.0),
        c=_get(cfg, "sampler", "c", float, default=5.0),
        d=_get(cfg, "sampler", "d", float, default=5.0),
        seed=seed_override if seed_override is not None
             else _get(cfg, "sampler", "seed", int, default=0),
        adapt=_get(cfg, "sampler", "adapt", bool, default=False),
    )


def tool_meta(config_hash: str, seed, command: str) -> dict:
    return {"tool_version": __version__, "config_sha256": config_hash,
            "seed": seed, "command": command}


def _write_json(path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_z(text: str, p: int) -> np.ndarray:
    try:
        z = np.array([float(t) for t in text.split(",")])
    except ValueError:
        raise ConfigError(f"covariate vector {text!r} is not comma-separated numbers") from None
    if z.shape != (p,):
        raise ConfigError(f"covariate vector {text!r} has length {len(z)}, expected {p}")
    return z


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg, cfg_hash = load_config(args.config)
    kind = _get(cfg, "scenario", "kind", str, default="uniform-theta")
    m = _get(cfg, "scenario", "m", int, default=200)
    seed = args.seed if args.seed is not None else _get(cfg, "scenario", "seed", int, default=0)
    theta_file = _get(cfg, "scenario", "theta_file", str)
    basis_file = _get(cfg, "scenario", "basis_file", str)

    dataset, theta, basis = synthetic_scenario(
        kind, m, seed, theta_file=theta_file, basis_file=basis_file)

    write_shots_csv(dataset, args.out_data)
    sidecar = dataset_sidecar(dataset)
    sidecar["tool"] = tool_meta(cfg_hash, seed, "simulate")
    _write_json(str(args.out_data) + ".meta.json", sidecar)
    write_truth_json(args.out_truth, theta, basis, dataset.region, dataset.scheme, m, seed)

    n0 = sum(g.count(0) for g in dataset.games)
    n1 = sum(g.count(1) for g in dataset.games)
    print(f"simulated {dataset.m} games: {n0} missed, {n1} made shots "
          f"-> {args.out_data}, {args.out_truth}")
    return EXIT_OK


def _load_dataset(args, cfg) -> Dataset:
    sidecar_path = str(args.data) + ".meta.json"
    side_region, side_scheme = None, None
    try:
        with open(sidecar_path) as fh:
            side = json.load(fh)
        r = side.get("region", {})
        side_region = Region(r["xmin"], r["xmax"], r["ymin"], r["ymax"])
        side_scheme = CovariateScheme.from_name(side["covariate_scheme"])
    except (OSError, KeyError, ValueError):
        pass

    region = region_from_config(cfg, default=side_region)
    scheme = scheme_from_config(cfg, default=side_scheme)
    if side_scheme is not None and scheme.name != side_scheme.name:
        raise ConfigError(
            f"config covariate scheme {scheme.name!r} conflicts with "
            f"dataset sidecar {side_scheme.name!r}")

    strict = getattr(args, "strict", False)
    dataset, rejects = read_shots_csv(args.data, region, scheme, strict=strict)
    for msg in rejects:
        print(f"warning: {args.data}: {msg}", file=sys.stderr)

    if _get(cfg, "filter", "apply", bool, default=False):
        dataset = filter_shots(
            dataset,
            min_distance=_get(cfg, "filter", "min_distance", float, default=1.0),
            max_distance=_get(cfg, "filter", "max_distance", float, default=28.0),
        )
    return dataset


def cmd_fit(args) -> int:
    cfg, cfg_hash = load_config(args.config)
    dataset = _load_dataset(args, cfg)
    basis = basis_from_config(cfg, dataset.region)
    grid = grid_from_config(cfg, dataset.region)
    sconfig = sampler_config_from(cfg, seed_override=args.seed)

    samples = run_chain(dataset, basis, grid, sconfig)

    samples.write_csv(args.out_samples)
    with open(args.out_basis, "w") as fh:
        fh.write(basis.to_json())
        fh.write("\n")
    meta = samples.metadata()
    meta["tool"] = tool_meta(cfg_hash, sconfig.seed, "fit")
    meta["grid"] = {"nx": grid.nx, "ny": grid.ny}
    meta["n_games"] = dataset.m
    meta["n_shots"] = dataset.n_shots
    _write_json(args.out_meta, meta)

    acc = {k: v for k, v in samples.acceptance_rates.items() if k != "auto_rejects"}
    acc_str = ", ".join(f"{k}={v:.3f}" for k, v in acc.items())
    print(f"fit complete: {samples.n_draws} retained draws; acceptance {acc_str} "
          f"-> {args.out_samples}")
    return EXIT_OK


def cmd_summarize(args) -> int:
    cfg, cfg_hash = load_config(args.config)
    with open(args.basis) as fh:
        basis = Basis.from_json(fh.read())
    samples = PosteriorSamples.read_csv(args.samples)
    xmin, xmax, ymin, ymax = basis.domain_scale.bounds()
    region = region_from_config(cfg, default=Region(xmin, xmax, ymin, ymax))
    grid = grid_from_config(cfg, region)
    p = samples.p

    if args.kind in ("intensity", "sqrt-intensity"):
        if args.z is None:
            raise ConfigError(f"kind={args.kind} requires --z")
        surface = intensity_map(samples, basis, _parse_z(args.z, p), args.j, grid,
                                sqrt=(args.kind == "sqrt-intensity"))
    elif args.kind == "density":
        if args.z is None:
            raise ConfigError("kind=density requires --z")
        surface = probability_density_map(samples, basis, _parse_z(args.z, p), grid)
    elif args.kind == "relrisk":
        if args.za is None or args.zb is None:
            raise ConfigError("kind=relrisk requires --za and --zb")
        surface = relative_risk_map(samples, basis, _parse_z(args.za, p),
                                    _parse_z(args.zb, p), grid, ci_level=args.ci_level)
        if args.out_contour:
            write_contour_json(args.out_contour, surface.contour)
    else:
        raise ConfigError(f"unknown summary kind {args.kind!r}")

    surface.write_csv(args.out)
    if args.out_json:
        doc = surface.to_json_dict()
        doc["tool"] = tool_meta(cfg_hash, None, "summarize")
        _write_json(args.out_json, doc)
    print(f"{args.kind} surface on {grid.nx}x{grid.ny} grid -> {args.out}")
    return EXIT_OK


def _select_estimator(args, grid) -> tuple[str, object]:
    chosen = [name for name, val in (
        ("samples", args.samples), ("external", args.external),
        ("est-truth", args.est_truth)) if val]
    if len(chosen) != 1:
        raise ConfigError("select exactly one estimator: --samples, --external, or --est-truth")
    if args.samples:
        if not args.basis:
            raise ConfigError("--samples requires --basis")
        with open(args.basis) as fh:
            basis = Basis.from_json(fh.read())
        samples = PosteriorSamples.read_csv(args.samples)
        return "posterior-mean", PosteriorMeanIntensity(samples, basis)
    if args.external:
        return "external", GridIntensity.read_csv(args.external, grid)
    theta, basis, _, _ = read_truth_json(args.est_truth)
    return "theta-file", ThetaIntensity(basis, theta)


def cmd_evaluate(args) -> int:
    cfg, cfg_hash = load_config(args.config)
    if args.protocol == "rmse" and not args.truth:
        raise ConfigError("protocol rmse requires --truth")

    if args.truth:
        theta_true, basis_true, region, scheme = read_truth_json(args.truth)
    else:
        region, scheme = region_from_config(cfg), scheme_from_config(cfg)
    grid = grid_from_config(cfg, region)

    ns = argparse.Namespace(data=args.data, strict=False)
    dataset = _load_dataset(ns, cfg) if args.data else None

    rows = []
    if args.protocol == "rmse":
        if dataset is None:
            raise ConfigError("protocol rmse requires --data")
        method, estimator = _select_estimator(args, grid)
        truth_fn = ThetaIntensity(basis_true, theta_true)
        rows.append({"method": method, "seed": args.seed, "rmse": rmse(estimator, truth_fn, dataset)})
    elif args.protocol == "npll":
        if dataset is None:
            raise ConfigError("protocol npll requires --data")
        p = args.p if args.p is not None else _get(cfg, "evaluate", "p", float, default=0.8)
        reps = args.reps if args.reps is not None else _get(cfg, "evaluate", "repetitions", int, default=10)
        rnx = _get(cfg, "evaluate", "regions_nx", int, default=20)
        rny = _get(cfg, "evaluate", "regions_ny", int, default=20)
        children = np.random.SeedSequence(args.seed).spawn(reps)

        if args.refit:
            basis = basis_from_config(cfg, dataset.region)
            method = "refit"

            def score_one(child):
                rng = np.random.default_rng(child)
                train, test = p_thin_split(dataset, p, rng)
                sconfig = sampler_config_from(cfg, seed_override=int(child.generate_state(1)[0]))
                fit = run_chain(train, basis, grid, sconfig)
                est = PosteriorMeanIntensity(fit, basis)
                return npll(est, test, grid, p=p, regions_nx=rnx, regions_ny=rny)
        else:
            method, estimator = _select_estimator(args, grid)

            def score_one(child):
                rng = np.random.default_rng(child)
                train, test = p_thin_split(dataset, p, rng)
                return npll(estimator, test, grid, p=p, regions_nx=rnx, regions_ny=rny)

        if args.threads > 1:
            with ThreadPoolExecutor(max_workers=args.threads) as pool:
                scores = list(pool.map(score_one, children))
        else:
            scores = [score_one(c) for c in children]
        rows.extend({"method": method, "seed": args.seed + k, "npll": s}
                    for k, s in enumerate(scores))
    else:
        raise ConfigError(f"unknown protocol {args.protocol!r}")

    write_scores_csv(args.out, rows)
    key = "rmse" if args.protocol == "rmse" else "npll"
    vals = np.array([r[key] for r in rows], dtype=float)
    meta = tool_meta(cfg_hash, args.seed, "evaluate")
    meta.update({"protocol": args.protocol, "mean": float(vals.mean()),
                 "sd": float(vals.std(ddof=1)) if len(vals) > 1 else 0.0,
                 "rows": len(rows)})
    _write_json(str(args.out) + ".meta.json", meta)
    print(f"{args.protocol}: {len(rows)} row(s), mean={vals.mean():.6g} "
          f"+/- {meta['sd']:.6g} -> {args.out}")
    return EXIT_OK


def cmd_basis(args) -> int:
    cfg, cfg_hash = load_config(args.config)
    region = region_from_config(cfg)
    basis = basis_from_config(cfg, region)
    print(f"kernel a={basis.params.a} b={basis.params.b}: L={basis.L}, "
          f"recovery={basis.recovery:.4f}")
    print("eigenvalues:", " ".join(f"{v:.6g}" for v in basis.eigenvalues))
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(basis.to_json())
            fh.write("\n")
        print(f"basis -> {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="courtcox",
        description="Log-Gaussian Cox process shot-chart modeling: simulate, "
                    "fit, summarize, evaluate.")
    parser.add_argument("--version", action="version", version=f"courtcox {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="draw a synthetic dataset from the model")
    sim.add_argument("--config", required=True)
    sim.add_argument("--seed", type=int, default=None, help="override [scenario] seed")
    sim.add_argument("--out-data", required=True)
    sim.add_argument("--out-truth", required=True)
    sim.set_defaults(func=cmd_simulate)

    fit = sub.add_parser("fit", help="run the MCMC sampler on a shot CSV")
    fit.add_argument("--data", required=True)
    fit.add_argument("--config", required=True)
    fit.add_argument("--seed", type=int, default=None, help="override [sampler] seed")
    fit.add_argument("--strict", action="store_true",
                     help="fail on malformed CSV rows instead of warning")
    fit.add_argument("--out-samples", required=True)
    fit.add_argument("--out-meta", required=True)
    fit.add_argument("--out-basis", required=True)
    fit.set_defaults(func=cmd_fit)

    summ = sub.add_parser("summarize", help="posterior summary surfaces")
    summ.add_argument("--samples", required=True)
    summ.add_argument("--basis", required=True)
    summ.add_argument("--config", default=None)
    summ.add_argument("--kind", required=True,
                      choices=["intensity", "sqrt-intensity", "density", "relrisk"])
    summ.add_argument("--z", default=None, help="covariate vector, e.g. 1,0,0")
    summ.add_argument("--j", type=int, default=1, choices=[0, 1], help="outcome type")
    summ.add_argument("--za", default=None, help="relrisk numerator covariates")
    summ.add_argument("--zb", default=None, help="relrisk denominator covariates")
    summ.add_argument("--ci-level", type=float, default=0.90)
    summ.add_argument("--out", required=True)
    summ.add_argument("--out-json", default=None)
    summ.add_argument("--out-contour", default=None)
    summ.set_defaults(func=cmd_summarize)

    ev = sub.add_parser("evaluate", help="score a fit or external intensity grid")
    ev.add_argument("--protocol", required=True, choices=["rmse", "npll"])
    ev.add_argument("--data", default=None)
    ev.add_argument("--config", default=None)
    ev.add_argument("--truth", default=None, help="truth JSON (required for rmse)")
    ev.add_argument("--samples", default=None)
    ev.add_argument("--basis", default=None)
    ev.add_argument("--external", default=None, help="intensity grid exchange CSV")
    ev.add_argument("--est-truth", default=None,
                    help="truth-format JSON used as the estimator")
    ev.add_argument("--refit", action="store_true",
                    help="npll: refit the model on each training split")
    ev.add_argument("--p", type=float, default=None)
    ev.add_argument("--reps", type=int, default=None)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--threads", type=int, default=1)
    ev.add_argument("--out", required=True)
    ev.set_defaults(func=cmd_evaluate)

    bas = sub.add_parser("basis", help="inspect the truncated eigenbasis")
    bas.add_argument("--config", required=True)
    bas.add_argument("--out", default=None)
    bas.set_defaults(func=cmd_basis)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except CourtcoxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
