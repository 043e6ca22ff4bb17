"""MCMC engine: Metropolis-adjusted Langevin updates for the coefficient
blocks and conjugate inverse-Gamma Gibbs updates for the hypervariances.

Sweep order per iteration: theta0 MALA, sigma0^2 Gibbs, beta0 MALA,
beta1 MALA, sigma_beta^2 Gibbs.  A chain is fully determined by
(dataset, config, seed); per-block acceptance rates are tracked throughout.

Default step sizes follow tau^2 = 0.03 / [L (p+1)]^{1/3} for every block.
The beta-block default can be switched to the alternative bracketing
0.03 / [L (p+1)^{1/3}] via ``tau_beta_bracketing="inner"``; which of the two
is intended upstream is ambiguous, so both are kept selectable.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .data_model import Dataset, GridSpec, ParamVector
from .errors import ChainDivergence, ConfigError, DataError
from .kernel_basis import Basis
from .likelihood import BLOCKS, LikelihoodContext


@dataclass
class SamplerConfig:
    iterations: int = 15_000
    burn_in: int = 10_000
    thin: int = 1
    tau0_sq: float | None = None        # None -> 0.03 / [L(p+1)]^{1/3}
    tau_beta_sq: float | None = None
    tau_beta_bracketing: str = "outer"  # "outer" | "inner"
    a_sigma: float = 5.0
    b_sigma: float = 5.0
    c: float = 5.0
    d: float = 5.0
    seed: int = 0
    adapt: bool = False                 # burn-in step-size adaptation, frozen after
    adapt_target: float = 0.574
    adapt_window: int = 50
    drift_cap: float | None = 1.0       # truncated-drift norm bound; None disables

    def __post_init__(self):
        if self.iterations < 1 or not (0 <= self.burn_in < self.iterations):
            raise ConfigError("need 0 <= burn_in < iterations")
        if self.thin < 1:
            raise ConfigError("thin must be >= 1")
        for name in ("a_sigma", "b_sigma", "c", "d"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"prior hyperparameter {name} must be positive")
        if self.tau0_sq is not None and self.tau0_sq <= 0:
            raise ConfigError("tau0_sq must be positive")
        if self.tau_beta_sq is not None and self.tau_beta_sq <= 0:
            raise ConfigError("tau_beta_sq must be positive")
        if self.tau_beta_bracketing not in ("outer", "inner"):
            raise ConfigError("tau_beta_bracketing must be 'outer' or 'inner'")
        if self.drift_cap is not None and self.drift_cap <= 0:
            raise ConfigError("drift_cap must be positive (or None)")

    def resolve_steps(self, L: int, p: int) -> dict[str, float]:
        tau0 = self.tau0_sq if self.tau0_sq is not None else 0.03 / (L * (p + 1)) ** (1.0 / 3.0)
        if self.tau_beta_sq is not None:
            taub = self.tau_beta_sq
        elif self.tau_beta_bracketing == "outer":
            taub = 0.03 / (L * (p + 1)) ** (1.0 / 3.0)
        else:
            taub = 0.03 / (L * (p + 1) ** (1.0 / 3.0))
        return {"theta0": tau0, "beta0": taub, "beta1": taub}

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations, "burn_in": self.burn_in, "thin": self.thin,
            "tau0_sq": self.tau0_sq, "tau_beta_sq": self.tau_beta_sq,
            "tau_beta_bracketing": self.tau_beta_bracketing,
            "a_sigma": self.a_sigma, "b_sigma": self.b_sigma, "c": self.c, "d": self.d,
            "seed": self.seed, "adapt": self.adapt, "drift_cap": self.drift_cap,
        }


@dataclass
class ChainState:
    theta: ParamVector
    iteration: int = 0
    accepts: dict = field(default_factory=lambda: {b: 0 for b in BLOCKS})
    proposals: dict = field(default_factory=lambda: {b: 0 for b in BLOCKS})
    auto_rejects: dict = field(default_factory=lambda: {b: 0 for b in BLOCKS})


@dataclass
class PosteriorSamples:
    """Retained post-burn-in draws plus chain metadata."""

    coeffs: np.ndarray        # (n_draws, (1+2p)L)
    sigma0_sq: np.ndarray     # (n_draws,)
    sigma_beta_sq: np.ndarray
    L: int
    p: int
    config: dict
    acceptance_rates: dict
    runtime_seconds: float = 0.0

    @property
    def n_draws(self) -> int:
        return self.coeffs.shape[0]

    def theta_at(self, idx: int) -> ParamVector:
        return ParamVector.from_coeffs(
            self.coeffs[idx], self.L, self.p,
            sigma0_sq=float(self.sigma0_sq[idx]),
            sigma_beta_sq=float(self.sigma_beta_sq[idx]),
        )

    def posterior_mean_theta(self) -> ParamVector:
        return ParamVector.from_coeffs(
            self.coeffs.mean(axis=0), self.L, self.p,
            sigma0_sq=float(self.sigma0_sq.mean()),
            sigma_beta_sq=float(self.sigma_beta_sq.mean()),
        )

    # -- columnar CSV + JSON sidecar ----------------------------------------

    def write_csv(self, path) -> None:
        L, p = self.L, self.p
        header = [f"theta0_{l+1}" for l in range(L)]
        for j in (0, 1):
            for k in range(p):
                header += [f"beta{j}_{k+1}_{l+1}" for l in range(L)]
        header += ["sigma0_sq", "sigma_beta_sq"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for r in range(self.n_draws):
                row = [repr(v) for v in self.coeffs[r]]
                row.append(repr(float(self.sigma0_sq[r])))
                row.append(repr(float(self.sigma_beta_sq[r])))
                writer.writerow(row)

    def metadata(self) -> dict:
        return {
            "L": self.L, "p": self.p, "n_draws": self.n_draws,
            "config": self.config, "acceptance_rates": self.acceptance_rates,
            "runtime_seconds": self.runtime_seconds,
        }

    def write_metadata(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.metadata(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def read_csv(cls, csv_path, meta_path=None) -> "PosteriorSamples":
        with open(csv_path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [list(map(float, r)) for r in reader if r]
        if not rows:
            raise DataError(f"{csv_path}: no retained draws")
        data = np.array(rows)
        try:
            L = sum(1 for h in header if h.startswith("theta0_"))
            n_beta = sum(1 for h in header if h.startswith("beta"))
            p = n_beta // (2 * L)
        except ZeroDivisionError:
            raise DataError(f"{csv_path}: malformed samples header") from None
        if (1 + 2 * p) * L + 2 != data.shape[1]:
            raise DataError(f"{csv_path}: header/column mismatch")
        meta = {}
        if meta_path is not None:
            with open(meta_path) as fh:
                meta = json.load(fh)
        return cls(
            coeffs=data[:, : (1 + 2 * p) * L],
            sigma0_sq=data[:, -2], sigma_beta_sq=data[:, -1],
            L=L, p=p,
            config=meta.get("config", {}),
            acceptance_rates=meta.get("acceptance_rates", {}),
            runtime_seconds=meta.get("runtime_seconds", 0.0),
        )


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------

def init_theta0(dataset: Dataset, grid: GridSpec, basis: Basis,
                ctx: LikelihoodContext | None = None,
                pseudo_count: float = 0.5, ridge: float = 1e-6) -> np.ndarray:
    """Least-squares start for theta0: regress log(count / cell area) per
    (game, type) on the aggregated design rows, then keep the theta0 block.

    Zero counts are replaced by `pseudo_count` before the log.  The normal
    equations are usually rank-deficient (2m rows, (1+2p)L unknowns), so a
    small ridge keeps the solve well posed.
    """
    if ctx is None:
        ctx = LikelihoodContext.build(dataset, basis, grid)
    rows, cnts = ctx.aggregated_design()
    y = np.log(np.maximum(cnts, pseudo_count) / grid.cell_area)
    G = rows.T @ rows
    rhs = rows.T @ y
    try:
        sol = np.linalg.solve(G, rhs)
        if not np.all(np.isfinite(sol)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        sol = np.linalg.solve(G + ridge * np.eye(G.shape[0]), rhs)
    theta0 = sol[: basis.L]
    if not np.all(np.isfinite(theta0)):
        raise ChainDivergence("non-finite initialization", iteration=0, block="theta0")
    return theta0


# ---------------------------------------------------------------------------
# Transition kernels
# ---------------------------------------------------------------------------

def _drift(vec: np.ndarray, grad: np.ndarray, tau_sq: float,
           cap: float | None) -> np.ndarray:
    """Langevin drift mu = vec + (tau^2/2) grad, with the step norm
    truncated at `cap` when set.

    The truncation (Roberts-Tweedie style) only engages far from
    stationarity, where the raw drift overshoots by orders of magnitude and
    a fixed-step chain would otherwise reject forever; the Metropolis
    correction uses the same truncated drift both ways, so the invariant
    distribution is unchanged.
    """
    step = 0.5 * tau_sq * grad
    if cap is not None:
        norm = float(np.linalg.norm(step))
        if norm > cap:
            step = step * (cap / norm)
    return vec + step


def mala_step(
    ctx: LikelihoodContext,
    state: ChainState,
    block: str,
    tau_sq: float,
    rng: np.random.Generator,
    drift_cap: float | None = 1.0,
) -> bool:
    """One MALA update of a coefficient block, in place.

    Proposal zeta ~ N(mu(theta), tau^2 I) with drift
    mu(theta) = theta + (tau^2/2) grad log pi(theta) (norm-truncated, see
    _drift); accepted with the usual Metropolis-Hastings ratio using the
    reverse drift at the proposal.  Non-finite proposal log-densities
    auto-reject (and are counted).
    """
    theta = state.theta
    cur = ctx._block_vector(theta, block).copy()
    lp_cur, g_cur = ctx.block_eval(theta, block)
    mu_cur = _drift(cur, g_cur, tau_sq, drift_cap)
    prop = mu_cur + math.sqrt(tau_sq) * rng.standard_normal(cur.shape[0])
    u = rng.uniform()

    _set_block(theta, block, prop)
    lp_prop, g_prop = ctx.block_eval(theta, block)
    state.proposals[block] += 1

    accept = False
    if np.isfinite(lp_prop) and np.all(np.isfinite(g_prop)):
        mu_prop = _drift(prop, g_prop, tau_sq, drift_cap)
        log_q_fwd = -float(((prop - mu_cur) ** 2).sum()) / (2.0 * tau_sq)
        log_q_rev = -float(((cur - mu_prop) ** 2).sum()) / (2.0 * tau_sq)
        log_alpha = lp_prop - lp_cur + log_q_rev - log_q_fwd
        accept = np.isfinite(log_alpha) and math.log(u) < log_alpha
    else:
        state.auto_rejects[block] += 1

    if accept:
        state.accepts[block] += 1
    else:
        _set_block(theta, block, cur)
    return accept


def _set_block(theta: ParamVector, block: str, values: np.ndarray) -> None:
    if block == "theta0":
        theta.theta0[:] = values
    else:
        theta.theta_beta[int(block[-1])] = values.reshape(theta.p, theta.L)


def sigma0_conditional(theta0: np.ndarray, a_sigma: float, b_sigma: float,
                       xi: np.ndarray) -> tuple[float, float]:
    """(shape, rate) of the inverse-Gamma full conditional of sigma0^2:
    IG(a_sigma + L/2, b_sigma + theta0' Xi^{-1} theta0 / 2)."""
    L = theta0.shape[0]
    rate = b_sigma + 0.5 * float(theta0 @ (theta0 / xi))
    return a_sigma + 0.5 * L, rate


def sigma_beta_conditional(theta_beta: np.ndarray, c: float, d: float,
                           xi: np.ndarray) -> tuple[float, float]:
    """(shape, rate) for sigma_beta^2, pooling all 2p coefficient blocks:
    IG(c + pL, d + sum_{j,k} theta_beta_jk' Xi^{-1} theta_beta_jk / 2)."""
    _, p, L = theta_beta.shape
    rate = d + 0.5 * float((theta_beta**2 / xi).sum())
    return c + p * L, rate


def draw_inverse_gamma(shape: float, rate: float, rng: np.random.Generator) -> float:
    return float(rate / rng.gamma(shape))


def gibbs_sigma0(theta0, a_sigma, b_sigma, xi, rng) -> float:
    shape, rate = sigma0_conditional(np.asarray(theta0, float), a_sigma, b_sigma, np.asarray(xi, float))
    return draw_inverse_gamma(shape, rate, rng)


def gibbs_sigma_beta(theta_beta, c, d, xi, rng) -> float:
    shape, rate = sigma_beta_conditional(np.asarray(theta_beta, float), c, d, np.asarray(xi, float))
    return draw_inverse_gamma(shape, rate, rng)


# ---------------------------------------------------------------------------
# Chain driver
# ---------------------------------------------------------------------------

def run_chain(dataset: Dataset, basis: Basis, grid: GridSpec,
              config: SamplerConfig) -> PosteriorSamples:
    """Run the full sampler and return the retained draws.

    Start values: theta0 from the least-squares regression, beta blocks at
    zero, both hypervariances drawn from their priors.  Aborts with
    diagnostics if the state ever becomes non-finite.
    """
    t_start = time.perf_counter()
    ctx = LikelihoodContext.build(dataset, basis, grid)
    L, p = basis.L, dataset.p
    rng = np.random.default_rng(config.seed)
    steps = config.resolve_steps(L, p)
    xi = basis.eigenvalues

    theta = ParamVector.zeros(L, p)
    theta.theta0 = init_theta0(dataset, grid, basis, ctx=ctx)
    theta.sigma0_sq = draw_inverse_gamma(config.a_sigma, config.b_sigma, rng)
    theta.sigma_beta_sq = draw_inverse_gamma(config.c, config.d, rng)
    state = ChainState(theta=theta)

    n_retained = (config.iterations - config.burn_in + config.thin - 1) // config.thin
    coeffs = np.empty((n_retained, (1 + 2 * p) * L))
    s0_draws = np.empty(n_retained)
    sb_draws = np.empty(n_retained)
    window_acc = {b: 0 for b in BLOCKS}
    kept = 0

    for v in range(1, config.iterations + 1):
        state.iteration = v
        for block, after_sigma in (("theta0", "sigma0"), ("beta0", None), ("beta1", "sigma_beta")):
            accepted = mala_step(ctx, state, block, steps[block], rng,
                                 drift_cap=config.drift_cap)
            window_acc[block] += int(accepted)
            if not np.all(np.isfinite(state.theta.coeffs)):
                raise ChainDivergence(
                    f"non-finite {block} state at iteration {v}",
                    iteration=v, block=block,
                    proposal=state.theta.coeffs.copy(),
                )
            if after_sigma == "sigma0":
                theta.sigma0_sq = gibbs_sigma0(
                    theta.theta0, config.a_sigma, config.b_sigma, xi, rng)
            elif after_sigma == "sigma_beta":
                theta.sigma_beta_sq = gibbs_sigma_beta(
                    theta.theta_beta, config.c, config.d, xi, rng)

        if config.adapt and v <= config.burn_in and v % config.adapt_window == 0:
            for b in BLOCKS:
                rate = window_acc[b] / config.adapt_window
                steps[b] *= math.exp(0.5 * (rate - config.adapt_target))
                window_acc[b] = 0

        if v > config.burn_in and (v - config.burn_in - 1) % config.thin == 0:
            coeffs[kept] = theta.coeffs
            s0_draws[kept] = theta.sigma0_sq
            sb_draws[kept] = theta.sigma_beta_sq
            kept += 1

    acc = {
        b: state.accepts[b] / max(state.proposals[b], 1) for b in BLOCKS
    }
    acc["auto_rejects"] = dict(state.auto_rejects)
    return PosteriorSamples(
        coeffs=coeffs[:kept], sigma0_sq=s0_draws[:kept], sigma_beta_sq=sb_draws[:kept],
        L=L, p=p, config=config.to_dict(), acceptance_rates=acc,
        runtime_seconds=time.perf_counter() - t_start,
    )


def gelman_rubin(chains: list[np.ndarray]) -> float:
    """Potential scale reduction factor for one scalar across >= 2 chains."""
    seqs = [np.asarray(c, float) for c in chains]
    n = min(len(c) for c in seqs)
    if len(seqs) < 2 or n < 2:
        raise DataError("gelman_rubin needs >= 2 chains of length >= 2")
    x = np.stack([c[:n] for c in seqs])
    means = x.mean(axis=1)
    B = n * means.var(ddof=1)
    W = x.var(axis=1, ddof=1).mean()
    if W == 0:
        return 1.0
    var_hat = (n - 1) / n * W + B / n
    return float(np.sqrt(var_hat / W))
