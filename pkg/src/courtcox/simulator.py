"""Synthetic data generation: inhomogeneous Poisson sampling by thinning,
and the two scenario presets (random coefficients on a standardized square,
or coefficients loaded from a previous fit on the real court frame).
"""

from __future__ import annotations

import json
import math

import numpy as np

from .data_model import (
    CovariateScheme,
    Dataset,
    GameRecord,
    GridSpec,
    ParamVector,
    Region,
    ShotEvent,
    encode_covariates,
)
from .errors import ConfigError, EnvelopeViolation
from .kernel_basis import Basis, DomainScale, KernelParams, build_basis_2d, eval_basis

ENVELOPE_SAFETY = 1.2

# Balanced-design enumeration order of (home, strong) cells.
COVARIATE_CELLS = ((0, 0), (0, 1), (1, 0), (1, 1))


def sample_ppp(
    log_intensity_fn,
    region: Region,
    grid: GridSpec,
    rng: np.random.Generator,
    safety: float = ENVELOPE_SAFETY,
) -> np.ndarray:
    """One realization of an inhomogeneous Poisson process by thinning.

    The envelope is max over grid-cell centers of the intensity times a
    safety factor; candidates are a homogeneous Poisson(lambda_max |R|)
    pattern thinned with probability lambda(s)/lambda_max.  A candidate whose
    intensity exceeds the envelope aborts the draw (raise the safety factor
    or refine the grid).
    """
    log_vals = np.asarray(log_intensity_fn(grid.centers()), dtype=float)
    if not np.all(np.isfinite(log_vals)):
        raise EnvelopeViolation("log intensity non-finite on the envelope grid")
    lam_max = float(np.exp(log_vals).max()) * safety
    if lam_max == 0.0:
        return np.empty((0, 2))
    n = rng.poisson(lam_max * region.area)
    xs = rng.uniform(region.xmin, region.xmax, size=n)
    ys = rng.uniform(region.ymin, region.ymax, size=n)
    pts = np.column_stack([xs, ys])
    if n == 0:
        return pts
    lam = np.exp(np.asarray(log_intensity_fn(pts), dtype=float))
    if np.any(lam > lam_max):
        worst = float(lam.max() / lam_max)
        raise EnvelopeViolation(
            f"intensity exceeds the thinning envelope by x{worst:.3f}; "
            "increase the safety factor or envelope grid resolution"
        )
    keep = rng.uniform(size=n) < lam / lam_max
    return pts[keep]


def _game_log_intensity(basis: Basis, theta: ParamVector, z: np.ndarray, j: int):
    w = theta.theta0 + theta.theta_beta[j].T @ z

    def fn(points):
        return eval_basis(basis, points) @ w

    return fn


def simulate_dataset(
    basis: Basis,
    theta: ParamVector,
    region: Region,
    scheme: CovariateScheme,
    m: int,
    seed: int,
    grid: GridSpec | None = None,
) -> Dataset:
    """Draw m games from the model, balanced over the four covariate cells.

    Each game gets an independent child RNG stream derived from (seed, game
    index), so games are reproducible and order-independent.
    """
    if m < 4 or m % 4 != 0:
        raise ConfigError("balanced design needs m divisible by 4 (and >= 4)")
    if grid is None:
        grid = GridSpec(region, 50, 50)
    per_cell = m // 4
    streams = np.random.SeedSequence(seed).spawn(m)
    width = len(str(m))
    games = []
    idx = 0
    for home, strong in COVARIATE_CELLS:
        z = encode_covariates(home, strong, scheme)
        for _ in range(per_cell):
            game_rng = np.random.default_rng(streams[idx])
            shots = []
            for j in (0, 1):
                pts = sample_ppp(_game_log_intensity(basis, theta, z, j), region, grid, game_rng)
                shots.extend(ShotEvent(float(x), float(y), j) for x, y in pts)
            games.append(
                GameRecord(game_id=f"g{idx + 1:0{width}d}", z=z, shots=tuple(shots))
            )
            idx += 1
    prov = {"simulated": True, "seed": seed, "m": m}
    return Dataset(tuple(games), region, scheme, prov)


def synthetic_scenario(
    kind: str,
    m: int,
    seed: int,
    theta_file=None,
    basis_file=None,
) -> tuple[Dataset, ParamVector, Basis]:
    """Scenario presets.

    uniform-theta: standardized square [-1, 1]^2, kernel a = b = 1, L = 3,
    interaction covariate coding (p = 3), coefficients iid U[-1, 1] of
    length 7L.
    fitted-theta: coefficients from a saved parameter JSON (e.g. a posterior
    mean) with its matching basis JSON; the region is the basis domain.
    """
    scheme = CovariateScheme(interaction=True)
    if kind == "uniform-theta":
        region = Region(-1.0, 1.0, -1.0, 1.0)
        basis = build_basis_2d(
            KernelParams(1.0, 1.0), L=3,
            domain_scale=DomainScale.from_bounds(-1.0, 1.0, -1.0, 1.0),
        )
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        coeffs = rng.uniform(-1.0, 1.0, size=(1 + 2 * scheme.p) * basis.L)
        theta = ParamVector.from_coeffs(coeffs, basis.L, scheme.p)
    elif kind == "fitted-theta":
        if theta_file is None or basis_file is None:
            raise ConfigError("fitted-theta scenario needs theta and basis files")
        with open(basis_file) as fh:
            basis = Basis.from_json(fh.read())
        with open(theta_file) as fh:
            theta = ParamVector.from_dict(json.load(fh))
        if theta.L != basis.L:
            raise ConfigError(f"theta has L={theta.L} but basis has L={basis.L}")
        if theta.p != scheme.p:
            raise ConfigError(f"theta has p={theta.p}, expected {scheme.p}")
        xmin, xmax, ymin, ymax = basis.domain_scale.bounds()
        region = Region(xmin, xmax, ymin, ymax)
    else:
        raise ConfigError(f"unknown scenario kind {kind!r}")

    dataset = simulate_dataset(basis, theta, region, scheme, m, seed)
    return dataset, theta, basis


def write_truth_json(path, theta: ParamVector, basis: Basis, region: Region,
                     scheme: CovariateScheme, m: int, seed: int) -> None:
    doc = {
        "theta": theta.to_dict(),
        "basis": json.loads(basis.to_json()),
        "region": {"xmin": region.xmin, "xmax": region.xmax,
                   "ymin": region.ymin, "ymax": region.ymax},
        "covariate_scheme": scheme.name,
        "m": m,
        "seed": seed,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_truth_json(path) -> tuple[ParamVector, Basis, Region, CovariateScheme]:
    with open(path) as fh:
        doc = json.load(fh)
    theta = ParamVector.from_dict(doc["theta"])
    basis = Basis.from_json(json.dumps(doc["basis"]))
    r = doc["region"]
    region = Region(r["xmin"], r["xmax"], r["ymin"], r["ymax"])
    scheme = CovariateScheme.from_name(doc["covariate_scheme"])
    return theta, basis, region, scheme
