"""Fisher null-space one-class classification with lp-norm multiple kernel learning."""
from .exceptions import *  # noqa: F401,F403
from .kernelspace import (
    KernelBank,
    KernelParams,
    build_bank,
    combine_weighted,
    cross_gram_rbf,
    fuse,
    fuse_average,
    fuse_product,
    gram_rbf,
    rbf_width_heuristic,
    validate_psd,
)
from .fn_solver import FnModel, decision_score, fit_fn, fit_fused, project, solve_alpha
from .lp_mkl import (
    P_GRID,
    MklConfig,
    MklModel,
    beta_update,
    fit_fixed_point,
    fit_gradient_ascent,
    kernel_responses,
    mkl_gradient,
    mkl_objective,
)
from .joint_mkl import JointMklModel, TaskBankSet, apply_shared_beta, fit_joint
from .evaluation import HyperGrid, Protocol, ScoredSet, grid_select, pad_metrics, roc_auc, run_trials
from .data_io import (
    Dataset,
    SyntheticSpec,
    load_features_csv,
    load_kernel_bank,
    load_model,
    make_noisy_bank,
    save_kernel_bank,
    save_model,
    synth_gaussian_task,
)

__version__ = "0.1.0"
