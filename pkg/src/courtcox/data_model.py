"""Domain types for shot-chart datasets: marked shot locations grouped by
game, per-game covariates, the court region, and the quadrature grid.

Court frame convention: origin at the basket center, x across the court in
[-25, 25] ft, y toward half court in [0, 35] ft.  Covariates are 0/1
indicators; the default scheme is (home, strong, home*strong) giving p = 3,
with a plain (home, strong) p = 2 scheme selectable in config.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DataError
from .kernel_basis import Basis, eval_basis

BASKET = (0.0, 0.0)
MIN_SHOT_DISTANCE = 1.0
MAX_SHOT_DISTANCE = 28.0


@dataclass(frozen=True)
class Region:
    """Axis-aligned court rectangle, in feet."""

    xmin: float = -25.0
    xmax: float = 25.0
    ymin: float = 0.0
    ymax: float = 35.0

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ConfigError("region must have positive extent")

    @property
    def area(self) -> float:
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, float).reshape(-1, 2)
        return (
            (pts[:, 0] >= self.xmin)
            & (pts[:, 0] <= self.xmax)
            & (pts[:, 1] >= self.ymin)
            & (pts[:, 1] <= self.ymax)
        )


@dataclass(frozen=True)
class GridSpec:
    """Equally spaced quadrature cells tiling the region exactly.

    Cell h = iy * nx + ix has center (xmin + (ix+0.5)dx, ymin + (iy+0.5)dy);
    the uniform cell area is dx * dy so the areas sum to |R| by construction.
    """

    region: Region
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ConfigError("grid must have at least one cell per axis")

    @property
    def H(self) -> int:
        return self.nx * self.ny

    @property
    def dx(self) -> float:
        return (self.region.xmax - self.region.xmin) / self.nx

    @property
    def dy(self) -> float:
        return (self.region.ymax - self.region.ymin) / self.ny

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    def centers(self) -> np.ndarray:
        """All cell centers, shape (H, 2), x varying fastest."""
        xs = self.region.xmin + (np.arange(self.nx) + 0.5) * self.dx
        ys = self.region.ymin + (np.arange(self.ny) + 0.5) * self.dy
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx.ravel(), gy.ravel()])

    def cell_index(self, points: np.ndarray) -> np.ndarray:
        """Index of the cell containing each point (boundary points clamp in)."""
        pts = np.asarray(points, float).reshape(-1, 2)
        ix = np.clip(((pts[:, 0] - self.region.xmin) / self.dx).astype(int), 0, self.nx - 1)
        iy = np.clip(((pts[:, 1] - self.region.ymin) / self.dy).astype(int), 0, self.ny - 1)
        return iy * self.nx + ix


@dataclass(frozen=True)
class CovariateScheme:
    """Encoding of per-game flags into the covariate vector z."""

    interaction: bool = True

    @property
    def p(self) -> int:
        return 3 if self.interaction else 2

    @property
    def name(self) -> str:
        return "interaction" if self.interaction else "basic"

    @classmethod
    def from_name(cls, name: str) -> "CovariateScheme":
        if name == "interaction":
            return cls(interaction=True)
        if name == "basic":
            return cls(interaction=False)
        raise ConfigError(f"unknown covariate scheme {name!r}")


def encode_covariates(home: int, strong: int, scheme: CovariateScheme) -> np.ndarray:
    """0/1 indicator coding; with the interaction scheme z3 = home * strong."""
    home = int(home)
    strong = int(strong)
    if home not in (0, 1) or strong not in (0, 1):
        raise DataError(f"flags must be 0/1, got home={home} strong={strong}")
    z = [float(home), float(strong)]
    if scheme.interaction:
        z.append(float(home * strong))
    return np.array(z)


@dataclass(frozen=True)
class ShotEvent:
    x: float
    y: float
    made: int  # 0 = missed, 1 = made

    def __post_init__(self):
        if self.made not in (0, 1):
            raise DataError(f"shot outcome must be 0 or 1, got {self.made}")

    @property
    def location(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class GameRecord:
    game_id: str
    z: np.ndarray
    shots: tuple[ShotEvent, ...]

    def locations(self, made: int | None = None) -> np.ndarray:
        sel = self.shots if made is None else [s for s in self.shots if s.made == made]
        if not sel:
            return np.empty((0, 2))
        return np.array([[s.x, s.y] for s in sel])

    def count(self, made: int) -> int:
        return sum(1 for s in self.shots if s.made == made)


@dataclass(frozen=True)
class Dataset:
    games: tuple[GameRecord, ...]
    region: Region
    scheme: CovariateScheme
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.games:
            raise DataError("dataset must contain at least one game")
        p = self.scheme.p
        for g in self.games:
            if len(g.z) != p:
                raise DataError(
                    f"game {g.game_id}: covariate length {len(g.z)} != scheme p={p}"
                )

    @property
    def m(self) -> int:
        return len(self.games)

    @property
    def p(self) -> int:
        return self.scheme.p

    @property
    def n_shots(self) -> int:
        return sum(len(g.shots) for g in self.games)

    def covariate_matrix(self) -> np.ndarray:
        return np.array([g.z for g in self.games])


@dataclass
class ParamVector:
    """Model parameters: basis coefficients plus the two hypervariances.

    theta_beta has shape (2, p, L); theta_beta[j, k] holds the coefficients
    of the k-th covariate effect for outcome type j.  The flat coefficient
    order is (theta0, theta_beta[0].ravel(), theta_beta[1].ravel()), total
    length (1 + 2p) * L, matching design_row.
    """

    theta0: np.ndarray
    theta_beta: np.ndarray
    sigma0_sq: float = 1.0
    sigma_beta_sq: float = 1.0

    def __post_init__(self):
        self.theta0 = np.asarray(self.theta0, dtype=float)
        self.theta_beta = np.asarray(self.theta_beta, dtype=float)
        if self.theta_beta.ndim != 3 or self.theta_beta.shape[0] != 2:
            raise DataError("theta_beta must have shape (2, p, L)")
        if self.theta_beta.shape[2] != self.theta0.shape[0]:
            raise DataError("theta0 and theta_beta disagree on L")
        if not (self.sigma0_sq > 0 and self.sigma_beta_sq > 0):
            raise DataError("hypervariances must be strictly positive")

    @property
    def L(self) -> int:
        return self.theta0.shape[0]

    @property
    def p(self) -> int:
        return self.theta_beta.shape[1]

    @property
    def coeffs(self) -> np.ndarray:
        return np.concatenate(
            [self.theta0, self.theta_beta[0].ravel(), self.theta_beta[1].ravel()]
        )

    @classmethod
    def from_coeffs(cls, coeffs, L, p, sigma0_sq=1.0, sigma_beta_sq=1.0) -> "ParamVector":
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != ((1 + 2 * p) * L,):
            raise DataError(f"expected {(1 + 2 * p) * L} coefficients, got {coeffs.shape}")
        return cls(
            theta0=coeffs[:L].copy(),
            theta_beta=coeffs[L:].reshape(2, p, L).copy(),
            sigma0_sq=sigma0_sq,
            sigma_beta_sq=sigma_beta_sq,
        )

    @classmethod
    def zeros(cls, L: int, p: int, sigma0_sq=1.0, sigma_beta_sq=1.0) -> "ParamVector":
        return cls(np.zeros(L), np.zeros((2, p, L)), sigma0_sq, sigma_beta_sq)

    def copy(self) -> "ParamVector":
        return ParamVector(
            self.theta0.copy(), self.theta_beta.copy(), self.sigma0_sq, self.sigma_beta_sq
        )

    def to_dict(self) -> dict:
        return {
            "theta0": self.theta0.tolist(),
            "theta_beta": self.theta_beta.tolist(),
            "sigma0_sq": self.sigma0_sq,
            "sigma_beta_sq": self.sigma_beta_sq,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ParamVector":
        return cls(
            theta0=np.array(doc["theta0"], dtype=float),
            theta_beta=np.array(doc["theta_beta"], dtype=float),
            sigma0_sq=doc["sigma0_sq"],
            sigma_beta_sq=doc["sigma_beta_sq"],
        )


def design_row(basis: Basis, z: np.ndarray, j: int, s) -> np.ndarray:
    """Design row x with x . theta = log lambda_j(s; z).

    Layout (1 + 2p) * L: [phi(s), j=0 block, j=1 block] where the block for
    outcome j is kron(z, phi(s)) and the other block is zero.
    """
    z = np.asarray(z, dtype=float).ravel()
    if j not in (0, 1):
        raise DataError(f"outcome type must be 0 or 1, got {j}")
    phi = eval_basis(basis, np.asarray(s, float).reshape(1, 2))[0]
    L = basis.L
    p = len(z)
    row = np.zeros((1 + 2 * p) * L)
    row[:L] = phi
    start = L + j * p * L
    row[start : start + p * L] = np.kron(z, phi)
    return row


def shot_distances(points: np.ndarray, basket=BASKET) -> np.ndarray:
    pts = np.asarray(points, float).reshape(-1, 2)
    return np.hypot(pts[:, 0] - basket[0], pts[:, 1] - basket[1])


def filter_shots(
    dataset: Dataset,
    min_distance: float = MIN_SHOT_DISTANCE,
    max_distance: float = MAX_SHOT_DISTANCE,
    basket=BASKET,
) -> Dataset:
    """Drop shots closer than min_distance or farther than max_distance from
    the basket.  Removal counts accumulate in provenance; idempotent."""
    removed_near = 0
    removed_far = 0
    games = []
    for g in dataset.games:
        kept = []
        for shot in g.shots:
            d = math.hypot(shot.x - basket[0], shot.y - basket[1])
            if d < min_distance:
                removed_near += 1
            elif d > max_distance:
                removed_far += 1
            else:
                kept.append(shot)
        games.append(replace(g, shots=tuple(kept)))
    prov = dict(dataset.provenance)
    prov["removed_near_basket"] = prov.get("removed_near_basket", 0) + removed_near
    prov["removed_beyond_range"] = prov.get("removed_beyond_range", 0) + removed_far
    prov["distance_filter"] = {"min": min_distance, "max": max_distance}
    return replace(dataset, games=tuple(games), provenance=prov)


# ---------------------------------------------------------------------------
# CSV interchange: header game_id,x,y,made,home,strong (feet, 0/1 flags)
# ---------------------------------------------------------------------------

CSV_HEADER = ["game_id", "x", "y", "made", "home", "strong"]


def write_shots_csv(dataset: Dataset, path) -> None:
    """Write the dataset in the shot CSV format.

    Covariate flags are recovered from the first two entries of z (the 0/1
    coding keeps them intact).  Games without shots leave no rows.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for g in dataset.games:
            home, strong = int(g.z[0]), int(g.z[1])
            for shot in g.shots:
                writer.writerow([g.game_id, repr(shot.x), repr(shot.y), shot.made, home, strong])


def dataset_sidecar(dataset: Dataset) -> dict:
    return {
        "region": {
            "xmin": dataset.region.xmin,
            "xmax": dataset.region.xmax,
            "ymin": dataset.region.ymin,
            "ymax": dataset.region.ymax,
        },
        "covariate_scheme": dataset.scheme.name,
        "n_games": dataset.m,
        "n_shots": dataset.n_shots,
        "provenance": dataset.provenance,
    }


def write_dataset_sidecar(dataset: Dataset, path) -> None:
    with open(path, "w") as fh:
        json.dump(dataset_sidecar(dataset), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_shots_csv(
    path,
    region: Region,
    scheme: CovariateScheme,
    strict: bool = False,
) -> tuple[Dataset, list[str]]:
    """Parse a shot CSV into a Dataset.

    Malformed rows are rejected per row and reported (raised immediately when
    strict).  Rows with covariate flags conflicting with an earlier row of
    the same game are malformed.  Games keep first-appearance order.
    """
    rejects: list[str] = []
    games: dict[str, dict] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if [h.strip() for h in header] != CSV_HEADER:
            raise DataError(f"{path}: expected header {','.join(CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                gid, xs, ys, made_s, home_s, strong_s = [c.strip() for c in row]
                x, y = float(xs), float(ys)
                made, home, strong = int(made_s), int(home_s), int(strong_s)
                if made not in (0, 1) or home not in (0, 1) or strong not in (0, 1):
                    raise ValueError("flags must be 0/1")
                if not (np.isfinite(x) and np.isfinite(y)):
                    raise ValueError("non-finite coordinates")
                if not region.contains([[x, y]])[0]:
                    raise ValueError(f"location ({x}, {y}) outside region")
            except ValueError as exc:
                msg = f"line {lineno}: {exc}"
                if strict:
                    raise DataError(f"{path}: {msg}") from None
                rejects.append(msg)
                continue
            rec = games.setdefault(gid, {"home": home, "strong": strong, "shots": []})
            if (rec["home"], rec["strong"]) != (home, strong):
                msg = f"line {lineno}: covariates conflict with earlier rows of game {gid}"
                if strict:
                    raise DataError(f"{path}: {msg}") from None
                rejects.append(msg)
                continue
            rec["shots"].append(ShotEvent(x, y, made))
    if not games:
        raise DataError(f"{path}: no valid shot rows")
    records = tuple(
        GameRecord(
            game_id=gid,
            z=encode_covariates(rec["home"], rec["strong"], scheme),
            shots=tuple(rec["shots"]),
        )
        for gid, rec in games.items()
    )
    prov = {"source": str(path), "rejected_rows": len(rejects)}
    return Dataset(records, region, scheme, prov), rejects
