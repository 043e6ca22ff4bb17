"""Quantitative scoring: RMSE against a known truth at observed shot
locations, and predictive negative log-likelihood (NPLL) of held-out counts
under p-thinning with a rectangular spatial partition.

Intensity estimators are callables (game, j, points) -> intensities, so the
same scoring code handles model fits (which depend on the game only through
its covariates), true-parameter evaluators, constants, and externally
supplied per-game intensity grids.
"""

from __future__ import annotations

import csv
from dataclasses import replace

import numpy as np
from scipy.special import gammaln

from .data_model import Dataset, GameRecord, GridSpec, ParamVector
from .errors import ConfigError, DataError
from .kernel_basis import Basis, eval_basis
from .sampler import PosteriorSamples

NPLL_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# Intensity estimators
# ---------------------------------------------------------------------------

class ThetaIntensity:
    """Intensity surface from a single coefficient vector."""

    def __init__(self, basis: Basis, theta: ParamVector, scale: float = 1.0):
        self.basis = basis
        self.theta = theta
        self.scale = scale

    def __call__(self, game: GameRecord, j: int, points) -> np.ndarray:
        w = self.theta.theta0 + self.theta.theta_beta[j].T @ np.asarray(game.z, float)
        return self.scale * np.exp(eval_basis(self.basis, points) @ w)


class PosteriorMeanIntensity:
    """Posterior mean of the intensity: average of exp(x . theta_v) over the
    retained draws (not exp of the coefficient mean)."""

    def __init__(self, samples: PosteriorSamples, basis: Basis):
        self.samples = samples
        self.basis = basis

    def _weights(self, z: np.ndarray, j: int) -> np.ndarray:
        L, p = self.samples.L, self.samples.p
        theta0 = self.samples.coeffs[:, :L]
        beta_j = self.samples.coeffs[:, L + j * p * L : L + (j + 1) * p * L].reshape(-1, p, L)
        return (theta0 + np.einsum("vpl,p->vl", beta_j, np.asarray(z, float))).T

    def __call__(self, game: GameRecord, j: int, points) -> np.ndarray:
        phi = eval_basis(self.basis, points)
        return np.exp(phi @ self._weights(game.z, j)).mean(axis=1)


class ConstantIntensity:
    """Flat surface with a single rate everywhere."""

    def __init__(self, value: float):
        self.value = float(value)

    def __call__(self, game: GameRecord, j: int, points) -> np.ndarray:
        pts = np.asarray(points, float).reshape(-1, 2)
        return np.full(pts.shape[0], float(self.value))


class EmpiricalRateIntensity:
    """Constant per (game, type): observed count divided by region area."""

    def __init__(self, dataset: Dataset):
        self.area = dataset.region.area
        self.rates = {
            (g.game_id, j): g.count(j) / self.area for g in dataset.games for j in (0, 1)
        }

    def __call__(self, game: GameRecord, j: int, points) -> np.ndarray:
        pts = np.asarray(points, float).reshape(-1, 2)
        return np.full(pts.shape[0], self.rates.get((game.game_id, j), 0.0))


class GridIntensity:
    """Intensity read from an exchange CSV (x, y, game_id?, type, value).

    Values live on the cells of `grid`; rows must land on cell centers.
    Entries without a game_id apply to every game.
    """

    def __init__(self, grid: GridSpec):
        self.grid = grid
        self.shared = {}    # j -> (H,) values
        self.per_game = {}  # (game_id, j) -> (H,) values

    @classmethod
    def read_csv(cls, path, grid: GridSpec) -> "GridIntensity":
        out = cls(grid)
        tol = 0.51 * min(grid.dx, grid.dy)
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = [h.strip() for h in next(reader)]
            if header not in (["x", "y", "game_id", "type", "value"],
                              ["x", "y", "type", "value"]):
                raise DataError(f"{path}: unexpected exchange header {header}")
            has_game = "game_id" in header
            centers = grid.centers()
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                x, y = float(row[0]), float(row[1])
                gid = row[2].strip() if has_game else ""
                j = int(row[2 + has_game])
                value = float(row[3 + has_game])
                if j not in (0, 1) or value < 0:
                    raise DataError(f"{path} line {lineno}: bad type or negative value")
                h = int(grid.cell_index([[x, y]])[0])
                if abs(centers[h, 0] - x) > tol or abs(centers[h, 1] - y) > tol:
                    raise DataError(f"{path} line {lineno}: ({x}, {y}) off the grid")
                key = (gid, j) if gid else j
                table = out.per_game if gid else out.shared
                table.setdefault(key, np.zeros(grid.H))[h] = value
        if not out.shared and not out.per_game:
            raise DataError(f"{path}: no intensity rows")
        return out

    def cell_values(self, game: GameRecord, j: int) -> np.ndarray:
        vals = self.per_game.get((game.game_id, j))
        if vals is None:
            vals = self.shared.get(j)
        if vals is None:
            raise DataError(f"no intensity values for game {game.game_id} type {j}")
        return vals

    def __call__(self, game: GameRecord, j: int, points) -> np.ndarray:
        return self.cell_values(game, j)[self.grid.cell_index(points)]


# ---------------------------------------------------------------------------
# RMSE
# ---------------------------------------------------------------------------

def rmse(estimated, truth, dataset: Dataset) -> float:
    """Root mean squared error between two intensity evaluators at every
    observed shot location (both outcome types, all games)."""
    sq_sum = 0.0
    n = 0
    for game in dataset.games:
        for j in (0, 1):
            locs = game.locations(made=j)
            if not len(locs):
                continue
            diff = np.asarray(estimated(game, j, locs), float) - np.asarray(
                truth(game, j, locs), float)
            sq_sum += float((diff**2).sum())
            n += len(locs)
    if n == 0:
        raise DataError("RMSE needs at least one observed shot")
    return float(np.sqrt(sq_sum / n))


# ---------------------------------------------------------------------------
# p-thinning and NPLL
# ---------------------------------------------------------------------------

def p_thin_split(dataset: Dataset, p: float, rng: np.random.Generator
                 ) -> tuple[Dataset, Dataset]:
    """Independent Bernoulli(p) retention of every shot into the train side;
    the rest form the test side.  Both sides keep all games (possibly with
    no shots) so covariate metadata survives the split."""
    if not (0.0 < p < 1.0):
        raise ConfigError("retention probability p must lie in (0, 1)")
    train_games, test_games = [], []
    for g in dataset.games:
        keep = rng.uniform(size=len(g.shots)) < p
        train_games.append(replace(g, shots=tuple(s for s, k in zip(g.shots, keep) if k)))
        test_games.append(replace(g, shots=tuple(s for s, k in zip(g.shots, keep) if not k)))
    prov_train = dict(dataset.provenance, thinning={"p": p, "side": "train"})
    prov_test = dict(dataset.provenance, thinning={"p": p, "side": "test"})
    return (
        replace(dataset, games=tuple(train_games), provenance=prov_train),
        replace(dataset, games=tuple(test_games), provenance=prov_test),
    )


def region_partition(grid: GridSpec, regions_nx: int = 20, regions_ny: int = 20
                     ) -> np.ndarray:
    """Region index of every grid cell for a regions_nx x regions_ny uniform
    rectangle partition of the same region."""
    centers = grid.centers()
    r = grid.region
    rx = np.clip(((centers[:, 0] - r.xmin) / (r.xmax - r.xmin) * regions_nx).astype(int),
                 0, regions_nx - 1)
    ry = np.clip(((centers[:, 1] - r.ymin) / (r.ymax - r.ymin) * regions_ny).astype(int),
                 0, regions_ny - 1)
    return ry * regions_nx + rx


def npll(estimated, test: Dataset, grid: GridSpec, p: float = 0.8,
         regions_nx: int = 20, regions_ny: int = 20,
         floor: float = NPLL_FLOOR) -> float:
    """Negative predictive log-likelihood of held-out regional counts.

    For every game, outcome type, and region S, the held-out count is scored
    against Poisson with mean (1-p)/p * lambda_hat(S), where lambda_hat(S)
    aggregates the estimator over the grid cells of S.  Regions with an
    estimated intensity of zero are floored to keep scores finite; lower is
    better.
    """
    part = region_partition(grid, regions_nx, regions_ny)
    n_regions = regions_nx * regions_ny
    centers = grid.centers()
    scale = (1.0 - p) / p
    cache: dict = {}
    total = 0.0
    for game in test.games:
        for j in (0, 1):
            key = (game.z.tobytes(), j)
            lam_regions = cache.get(key)
            if lam_regions is None:
                cell_vals = np.asarray(estimated(game, j, centers), float) * grid.cell_area
                lam_regions = np.bincount(part, weights=cell_vals, minlength=n_regions)
                if isinstance(estimated, (PosteriorMeanIntensity, ThetaIntensity,
                                          ConstantIntensity)):
                    cache[key] = lam_regions
            mu = np.maximum(scale * lam_regions, floor)
            counts = np.bincount(part[grid.cell_index(game.locations(made=j))],
                                 minlength=n_regions) if game.count(j) else np.zeros(n_regions)
            total += float((mu - counts * np.log(mu) + gammaln(counts + 1.0)).sum())
    return total


def npll_repetitions(dataset: Dataset, grid: GridSpec, estimator=None, fit_fn=None,
                     p: float = 0.8, repetitions: int = 10, seed: int = 0,
                     regions_nx: int = 20, regions_ny: int = 20) -> list[float]:
    """Repeat the p-thinning protocol with derived seeds.

    Either a fixed `estimator` is scored on every split, or `fit_fn` is
    called on each training side to produce the estimator for that split
    (the refit-per-split protocol).
    """
    if (estimator is None) == (fit_fn is None):
        raise ConfigError("provide exactly one of estimator and fit_fn")
    scores = []
    for child in np.random.SeedSequence(seed).spawn(repetitions):
        rng = np.random.default_rng(child)
        train, test = p_thin_split(dataset, p, rng)
        est = estimator if estimator is not None else fit_fn(train)
        scores.append(npll(est, test, grid, p=p,
                           regions_nx=regions_nx, regions_ny=regions_ny))
    return scores


def write_scores_csv(path, rows: list[dict]) -> None:
    """Rows of {method, seed, rmse?, npll?} in a fixed column order."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["method", "seed", "rmse", "npll"])
        for r in rows:
            writer.writerow([
                r["method"], r["seed"],
                repr(float(r["rmse"])) if r.get("rmse") is not None else "",
                repr(float(r["npll"])) if r.get("npll") is not None else "",
            ])
