"""Posterior summary surfaces on the quadrature grid: intensity maps,
normalized made-shot probability maps, and relative-risk maps with
credible-interval significance flags and the level-1 contour.

Every functional is computed per retained draw and then averaged, so the
credible flags and the posterior mean refer to the same Monte Carlo sample.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from skimage import measure

from .data_model import GridSpec
from .errors import ConfigError, DataError
from .kernel_basis import Basis, eval_basis
from .sampler import PosteriorSamples

KINDS = ("intensity", "sqrt-intensity", "density", "relative-risk")

FLAG_ABOVE = "+"
FLAG_BELOW = "-"
FLAG_NONE = ""


@dataclass
class SurfaceMap:
    grid: GridSpec
    values: np.ndarray                 # (H,)
    kind: str
    covariates: dict
    flags: np.ndarray | None = None    # (H,) of "+", "-" or ""
    contour: list = field(default_factory=list)  # list of polylines [(x, y), ...]

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown surface kind {self.kind!r}")
        if self.values.shape != (self.grid.H,):
            raise DataError("surface values must have one entry per grid cell")

    def write_csv(self, path) -> None:
        centers = self.grid.centers()
        flags = self.flags if self.flags is not None else [""] * self.grid.H
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["x", "y", "value", "flag"])
            for h in range(self.grid.H):
                writer.writerow([repr(centers[h, 0]), repr(centers[h, 1]),
                                 repr(float(self.values[h])), flags[h]])

    def to_json_dict(self) -> dict:
        doc = {
            "kind": self.kind,
            "covariates": self.covariates,
            "grid": {
                "nx": self.grid.nx, "ny": self.grid.ny,
                "region": {
                    "xmin": self.grid.region.xmin, "xmax": self.grid.region.xmax,
                    "ymin": self.grid.region.ymin, "ymax": self.grid.region.ymax,
                },
                "cell_area": self.grid.cell_area,
            },
            "values": [float(v) for v in self.values],
        }
        if self.flags is not None:
            doc["flags"] = list(self.flags)
        if self.contour:
            doc["contour"] = [[[float(x), float(y)] for x, y in line] for line in self.contour]
        return doc

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _draw_weights(samples: PosteriorSamples, z: np.ndarray, j: int) -> np.ndarray:
    """w_v = theta0_v + M_jv z for every retained draw; shape (L, n_draws)."""
    L, p = samples.L, samples.p
    z = np.asarray(z, float)
    if z.shape != (p,):
        raise DataError(f"covariate vector must have length {p}")
    theta0 = samples.coeffs[:, :L]
    beta_j = samples.coeffs[:, L + j * p * L : L + (j + 1) * p * L].reshape(-1, p, L)
    return (theta0 + np.einsum("vpl,p->vl", beta_j, z)).T


def _intensity_draws(samples, basis, z, j, grid) -> np.ndarray:
    """lambda_j(s_h; z) per draw; shape (H, n_draws)."""
    phi = eval_basis(basis, grid.centers())
    return np.exp(phi @ _draw_weights(samples, z, j))


def intensity_map(samples: PosteriorSamples, basis: Basis, z, j: int,
                  grid: GridSpec, sqrt: bool = False) -> SurfaceMap:
    """Posterior mean intensity per cell (mean of exp over draws); the sqrt
    variant takes the element-wise root after averaging."""
    if samples.n_draws == 0:
        raise DataError("no retained draws")
    mean = _intensity_draws(samples, basis, z, j, grid).mean(axis=1)
    values = np.sqrt(mean) if sqrt else mean
    return SurfaceMap(
        grid=grid, values=values,
        kind="sqrt-intensity" if sqrt else "intensity",
        covariates={"z": list(np.asarray(z, float)), "j": j},
    )


def probability_density_map(samples: PosteriorSamples, basis: Basis, z,
                            grid: GridSpec) -> SurfaceMap:
    """Location probability of a made shot, as mass per grid cell.

    Per draw the made-shot intensity over cells is normalized to sum to one
    (the miss intensity enters both numerator and normalizer of the
    underlying event probability and cancels under the exact per-cell
    normalization); the map is the draw average, so it sums to one as well.
    """
    if samples.n_draws == 0:
        raise DataError("no retained draws")
    lam1 = _intensity_draws(samples, basis, z, 1, grid)
    dens = lam1 / lam1.sum(axis=0, keepdims=True)
    values = dens.mean(axis=1)
    values = values / values.sum()
    return SurfaceMap(grid=grid, values=values, kind="density",
                      covariates={"z": list(np.asarray(z, float))})


def relative_risk_draws(samples: PosteriorSamples, basis: Basis, z_a, z_b,
                        grid: GridSpec) -> np.ndarray:
    """Per-draw relative risk of a made shot at each cell under covariates
    z_a versus z_b:

        RR(s) = [lambda_1(s; a) / lambda_1(s; b)]
                * [integral (lambda_1 + lambda_0)(.; b)
                   / integral (lambda_1 + lambda_0)(.; a)]

    with integrals by grid quadrature.  Shape (H, n_draws).
    """
    lam1_a = _intensity_draws(samples, basis, z_a, 1, grid)
    lam1_b = _intensity_draws(samples, basis, z_b, 1, grid)
    lam0_a = _intensity_draws(samples, basis, z_a, 0, grid)
    lam0_b = _intensity_draws(samples, basis, z_b, 0, grid)
    total_a = (lam1_a + lam0_a).sum(axis=0)  # cell_area cancels in the ratio
    total_b = (lam1_b + lam0_b).sum(axis=0)
    return (lam1_a / lam1_b) * (total_b / total_a)[None, :]


def relative_risk_map(samples: PosteriorSamples, basis: Basis, z_a, z_b,
                      grid: GridSpec, ci_level: float = 0.90) -> SurfaceMap:
    """Posterior mean relative-risk surface with CI significance flags.

    A cell is flagged '+' when the lower CI quantile exceeds 1 and '-' when
    the upper quantile is below 1.  The unit contour of the mean surface is
    attached as polylines in court coordinates.
    """
    if samples.n_draws == 0:
        raise DataError("no retained draws")
    if not (0.0 < ci_level < 1.0):
        raise ConfigError("ci_level must lie in (0, 1)")
    rr = relative_risk_draws(samples, basis, z_a, z_b, grid)
    mean = rr.mean(axis=1)
    lo_q, hi_q = 0.5 * (1.0 - ci_level), 0.5 * (1.0 + ci_level)
    lo = np.quantile(rr, lo_q, axis=1)
    hi = np.quantile(rr, hi_q, axis=1)
    flags = np.where(lo > 1.0, FLAG_ABOVE, np.where(hi < 1.0, FLAG_BELOW, FLAG_NONE))
    return SurfaceMap(
        grid=grid, values=mean, kind="relative-risk",
        covariates={"z_a": list(np.asarray(z_a, float)),
                    "z_b": list(np.asarray(z_b, float)),
                    "ci_level": ci_level},
        flags=flags,
        contour=unit_contour(mean, grid),
    )


def unit_contour(values: np.ndarray, grid: GridSpec, level: float = 1.0) -> list:
    """Level contour of a cell-center surface via marching squares,
    returned as polylines of (x, y) court coordinates."""
    img = np.asarray(values, float).reshape(grid.ny, grid.nx)
    if img.min() >= level or img.max() <= level:
        return []
    lines = measure.find_contours(img, level=level)
    out = []
    for line in lines:
        xs = grid.region.xmin + (line[:, 1] + 0.5) * grid.dx
        ys = grid.region.ymin + (line[:, 0] + 0.5) * grid.dy
        out.append(list(zip(xs.tolist(), ys.tolist())))
    return out


def write_contour_json(path, contour: list) -> None:
    doc = {"level": 1.0, "polylines": [[[float(x), float(y)] for x, y in line]
                                       for line in contour]}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
