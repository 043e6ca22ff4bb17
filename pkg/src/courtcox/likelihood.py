"""Log-posterior density, per-block gradients, and grid quadrature of the
intensity integral.

The log intensity is log lambda_j(s; z) = phi(s).theta0 + kron(z, phi(s)).theta_beta_j,
so for a fixed (z, j) the grid intensities are exp(Phi_grid @ w) with
w = theta0 + M_j z, M_j the L x p matrix of outcome-j coefficients.  Games
sharing a covariate vector share the integral, so all quadrature work is
grouped by unique z.  Terms of the log posterior that do not depend on theta
(the exp{|R|} factor and the Gaussian-prior normalizer, which varies only
with the hypervariances) are dropped; MALA acceptance ratios are taken at
fixed hypervariances, so the ratios are exact.

All reductions follow a fixed order, so results are reproducible bit-for-bit
for a given input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data_model import Dataset, GridSpec, ParamVector, design_row
from .errors import DataError
from .kernel_basis import Basis, eval_basis

BLOCKS = ("theta0", "beta0", "beta1")


def log_intensity(theta: ParamVector, basis: Basis, z, j: int, s) -> float:
    """log lambda_j(s; z) for a single location."""
    row = design_row(basis, z, j, s)
    return float(row @ theta.coeffs)


def integral_approx(theta: ParamVector, basis: Basis, z, j: int, grid: GridSpec) -> float:
    """Grid quadrature of the intensity integral over the region:
    sum_h exp{x_j(s_h; z) . theta} * cell_area."""
    phi = eval_basis(basis, grid.centers())
    w = theta.theta0 + theta.theta_beta[j].T @ np.asarray(z, float)
    return float(np.exp(phi @ w).sum() * grid.cell_area)


def integrate_on_grid(log_intensity_fn, grid: GridSpec) -> float:
    """Quadrature of an arbitrary log-intensity evaluator (test harness and
    simulator envelope share this)."""
    vals = np.asarray(log_intensity_fn(grid.centers()), dtype=float)
    return float(np.exp(vals).sum() * grid.cell_area)


@dataclass
class LikelihoodContext:
    """Quadrature cache: everything about (dataset, basis, grid) that the
    sampler reuses across iterations.

    Per-iteration work is O(H * L) per unique covariate vector and outcome
    type; the data-side sums (sum of phi over shots, and the per-block
    Kronecker data vectors) are constants precomputed here.
    """

    basis: Basis
    grid: GridSpec
    L: int
    p: int
    m: int
    cell_area: float
    phi_grid: np.ndarray          # (H, L)
    z_unique: np.ndarray          # (G, p) unique covariate vectors
    group_counts: np.ndarray      # (G,) games per unique z
    group_of_game: np.ndarray     # (m,)
    phi_sum_all: np.ndarray       # (L,) sum of phi over every shot
    beta_data: np.ndarray         # (2, p*L) data vector per outcome block
    shot_phi_sums: np.ndarray     # (m, 2, L) sum of phi over shots of (game, j)
    counts: np.ndarray            # (m, 2) shot counts per (game, j)

    @classmethod
    def build(cls, dataset: Dataset, basis: Basis, grid: GridSpec) -> "LikelihoodContext":
        L, p, m = basis.L, dataset.p, dataset.m
        phi_grid = eval_basis(basis, grid.centers())
        Z = dataset.covariate_matrix()
        z_unique, group_of_game = np.unique(Z, axis=0, return_inverse=True)
        group_counts = np.bincount(group_of_game, minlength=len(z_unique)).astype(float)

        shot_phi_sums = np.zeros((m, 2, L))
        counts = np.zeros((m, 2), dtype=int)
        for i, g in enumerate(dataset.games):
            for j in (0, 1):
                locs = g.locations(made=j)
                counts[i, j] = len(locs)
                if len(locs):
                    shot_phi_sums[i, j] = eval_basis(basis, locs).sum(axis=0)

        phi_sum_all = shot_phi_sums.sum(axis=(0, 1))
        beta_data = np.zeros((2, p * L))
        for j in (0, 1):
            # sum_i kron(z_i, S_ij) with S_ij the per-game shot phi sum
            beta_data[j] = np.einsum("ik,il->kl", Z, shot_phi_sums[:, j, :]).ravel()

        return cls(
            basis=basis, grid=grid, L=L, p=p, m=m,
            cell_area=grid.cell_area, phi_grid=phi_grid,
            z_unique=z_unique, group_counts=group_counts,
            group_of_game=group_of_game, phi_sum_all=phi_sum_all,
            beta_data=beta_data, shot_phi_sums=shot_phi_sums, counts=counts,
        )

    @classmethod
    def prior_only(cls, basis: Basis, p: int, grid: GridSpec) -> "LikelihoodContext":
        """Context with no games: the posterior reduces to the Gaussian
        prior.  Used for sampler calibration tests."""
        L = basis.L
        return cls(
            basis=basis, grid=grid, L=L, p=p, m=0,
            cell_area=grid.cell_area,
            phi_grid=eval_basis(basis, grid.centers()),
            z_unique=np.zeros((0, p)), group_counts=np.zeros(0),
            group_of_game=np.zeros(0, dtype=int),
            phi_sum_all=np.zeros(L), beta_data=np.zeros((2, p * L)),
            shot_phi_sums=np.zeros((0, 2, L)), counts=np.zeros((0, 2), dtype=int),
        )

    # -- intensity weights -------------------------------------------------

    def group_weights(self, theta: ParamVector, j: int) -> np.ndarray:
        """w = theta0 + M_j z for every unique covariate vector; (L, G)."""
        return theta.theta0[:, None] + theta.theta_beta[j].T @ self.z_unique.T

    def group_exp(self, theta: ParamVector, j: int) -> np.ndarray:
        """exp of log intensity at all grid cells for each unique z; (H, G).

        Overflow to inf is allowed: the caller sees a non-finite target value
        and rejects the offending proposal.
        """
        with np.errstate(over="ignore"):
            return np.exp(self.phi_grid @ self.group_weights(theta, j))

    def integral_term(self, theta: ParamVector) -> float:
        """sum_{i,j} integral of lambda_j(.; z_i), by grid quadrature."""
        total = 0.0
        for j in (0, 1):
            e = self.group_exp(theta, j)
            total += float(e.sum(axis=0) @ self.group_counts) * self.cell_area
        return total

    # -- prior -------------------------------------------------------------

    def prior_precision(self, theta: ParamVector, block: str) -> np.ndarray:
        """Diagonal of the block prior precision (sigma^2 Xi)^{-1}."""
        xi_inv = 1.0 / self.basis.eigenvalues
        if block == "theta0":
            return xi_inv / theta.sigma0_sq
        return np.tile(xi_inv, self.p) / theta.sigma_beta_sq

    def prior_quadratic(self, theta: ParamVector) -> float:
        """theta^T Sigma^{-1} theta with Sigma = diag{s0^2, sb^2 I_2p} (x) Xi."""
        xi_inv = 1.0 / self.basis.eigenvalues
        q0 = float(theta.theta0 @ (xi_inv * theta.theta0)) / theta.sigma0_sq
        qb = float((theta.theta_beta**2 * xi_inv).sum()) / theta.sigma_beta_sq
        return q0 + qb

    # -- per-block restricted target and gradient ---------------------------

    def _block_vector(self, theta: ParamVector, block: str) -> np.ndarray:
        if block == "theta0":
            return theta.theta0
        return theta.theta_beta[int(block[-1])].ravel()

    def block_eval(self, theta: ParamVector, block: str) -> tuple[float, np.ndarray]:
        """Log full conditional of a coefficient block (up to additive terms
        not involving it) and its gradient.

        theta0 touches the integrals of both outcome types; each beta block
        touches only its own type.
        """
        if block not in BLOCKS:
            raise DataError(f"unknown block {block!r}")
        v = self._block_vector(theta, block)
        prec = self.prior_precision(theta, block)
        types = (0, 1) if block == "theta0" else (int(block[-1]),)

        integral = 0.0
        grad = np.zeros_like(v)
        for j in types:
            e = self.group_exp(theta, j)                        # (H, G)
            integral += float(e.sum(axis=0) @ self.group_counts) * self.cell_area
            if block == "theta0":
                grad -= self.cell_area * (self.phi_grid.T @ (e @ self.group_counts))
            else:
                weighted = self.z_unique * self.group_counts[:, None]   # (G, p)
                contrib = self.phi_grid.T @ (e @ weighted)              # (L, p)
                grad -= self.cell_area * contrib.T.ravel()

        if block == "theta0":
            data_vec = self.phi_sum_all
        else:
            data_vec = self.beta_data[int(block[-1])]
        logp = -integral + float(data_vec @ v) - 0.5 * float(v @ (prec * v))
        grad += data_vec - prec * v
        return logp, grad

    def aggregated_design(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-(game, type) summed design rows X~_{ij} and counts, for the
        least-squares initialization; shapes (2m, (1+2p)L) and (2m,)."""
        dim = (1 + 2 * self.p) * self.L
        rows = np.zeros((2 * self.m, dim))
        cnts = np.zeros(2 * self.m)
        r = 0
        for i in range(self.m):
            z = self.z_unique[self.group_of_game[i]]
            for j in (0, 1):
                rows[r, : self.L] = self.shot_phi_sums[i, j]
                start = self.L + j * self.p * self.L
                rows[r, start : start + self.p * self.L] = np.kron(z, self.shot_phi_sums[i, j])
                cnts[r] = self.counts[i, j]
                r += 1
        return rows, cnts


def log_posterior(theta: ParamVector, basis: Basis, dataset: Dataset, grid: GridSpec) -> float:
    """Log posterior density of theta up to theta-independent constants.

    Dropped: the exp{|R|} factor per pattern and the prior normalizer (both
    free of theta).  Raises on a dataset with no games.
    """
    if dataset.m == 0:
        raise DataError("log_posterior requires a non-empty dataset")
    ctx = LikelihoodContext.build(dataset, basis, grid)
    return log_posterior_ctx(theta, ctx)


def log_posterior_ctx(theta: ParamVector, ctx: LikelihoodContext) -> float:
    data_dot = float(ctx.phi_sum_all @ theta.theta0)
    for j in (0, 1):
        data_dot += float(ctx.beta_data[j] @ theta.theta_beta[j].ravel())
    return -ctx.integral_term(theta) + data_dot - 0.5 * ctx.prior_quadratic(theta)


def grad_block(
    theta: ParamVector, block: str, basis: Basis, dataset: Dataset, grid: GridSpec
) -> np.ndarray:
    """Gradient of log_posterior restricted to one coefficient block."""
    ctx = LikelihoodContext.build(dataset, basis, grid)
    _, grad = ctx.block_eval(theta, block)
    return grad
