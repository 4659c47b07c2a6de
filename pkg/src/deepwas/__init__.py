"""Marginal-likelihood training of variant-effect priors over banded LD matrices."""

from .ldcore import (
    BandedCorrelationMatrix,
    PrecomputedWindow,
    SummaryStats,
    WindowPlan,
    clip_spectrum,
    ld_scores,
    load_banded_matrix,
    plan_windows,
    precompute_window,
    save_banded_matrix,
)
from .likelihood import (
    BOperator,
    SolverSettings,
    WindowLoss,
    ldsr_objective,
    null_nll,
    window1_limit_nll,
    window_nll,
    window_nll_grad,
)
from .iterlinalg import (
    LinearOperator,
    SolverReport,
    cg_solve,
    dense_nll_oracle,
    derive_seed,
    hutchinson_probe_pairs,
    nystrom_preconditioner,
    slq_logdet,
)
from .priors import (
    AnnotationTensor,
    NetworkSpec,
    PriorParams,
    build_constant,
    build_glm,
    build_network,
    normalize_features,
    prior_backward,
    prior_forward,
)
from .synthgen import (
    GroundTruth,
    gen_banded_correlation,
    gen_genotype_fixture,
    sample_associations,
    scale_ground_truth,
    threshold_ground_truth,
)
from .trainer import TrainConfig, TrainState, evaluate_heldout, rmse_log_f, train

__version__ = "0.1.0"
