"""courtcox: Bayesian log-Gaussian Cox process modeling of basketball shot
charts with spatially varying covariate effects.

Fits a hierarchical Cox process to marked (made/missed) shot patterns across
games, simulates from the same generative model, and produces posterior
intensity maps, shot-probability densities, relative-risk surfaces with
credible-interval flags, and RMSE/NPLL model-fit scores.
"""

__version__ = "0.1.0"

from .data_model import (
    CovariateScheme,
    Dataset,
    GameRecord,
    GridSpec,
    ParamVector,
    Region,
    ShotEvent,
    design_row,
    encode_covariates,
    filter_shots,
    read_shots_csv,
    write_shots_csv,
)
from .errors import (
    ChainDivergence,
    ConfigError,
    CourtcoxError,
    DataError,
    EnvelopeViolation,
    NumericalError,
)
from .evaluation import npll, npll_repetitions, p_thin_split, rmse
from .kernel_basis import (
    Basis,
    DomainScale,
    KernelParams,
    build_basis_2d,
    eigen_1d,
    eval_basis,
    nystrom_oracle,
)
from .likelihood import (
    LikelihoodContext,
    grad_block,
    integral_approx,
    log_intensity,
    log_posterior,
)
from .sampler import (
    PosteriorSamples,
    SamplerConfig,
    gelman_rubin,
    gibbs_sigma0,
    gibbs_sigma_beta,
    init_theta0,
    mala_step,
    run_chain,
)
from .simulator import sample_ppp, simulate_dataset, synthetic_scenario
from .summaries import (
    SurfaceMap,
    intensity_map,
    probability_density_map,
    relative_risk_map,
)
