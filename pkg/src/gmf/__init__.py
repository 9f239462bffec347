"""gmf: generalized matrix factorization.

Fits generalized linear latent variable models to large response
matrices via penalized quasi-likelihood, with alternating IRWLS and a
diagonal-Hessian quasi-Newton method, regularized rank selection,
missing-data support, and an evaluation/simulation suite.
"""

from .airwls import col_update, fit_airwls, row_update
from .data import (
    FitConfig,
    FitReport,
    ModelParams,
    ResponseData,
    holdout_split,
    load_csv_matrix,
    load_model,
    save_csv_matrix,
    save_model,
)
from .evaluate import (
    auc,
    bootstrap_refit,
    coef_mse,
    cross_validate,
    deviance,
    null_deviance_fraction,
    procrustes_error,
    scree_values,
)
from .families import Family, estimate_dispersion, get_family
from .newton import fit_newton, impute_missing, newton_sweep, wolfe_line_search
from .pql import (
    grad_coef,
    grad_u,
    hess_diag_coef,
    hess_diag_u,
    hess_u_full,
    identifiability_transform,
    laplace_logdet,
    linear_predictor,
    pql_objective,
)
from .simulate import simulate_dataset

__version__ = "0.1.0"

__all__ = [
    "FitConfig", "FitReport", "ModelParams", "ResponseData", "Family",
    "get_family", "estimate_dispersion",
    "load_csv_matrix", "save_csv_matrix", "save_model", "load_model",
    "holdout_split",
    "linear_predictor", "pql_objective", "grad_u", "grad_coef",
    "hess_u_full", "hess_diag_u", "hess_diag_coef", "laplace_logdet",
    "identifiability_transform",
    "row_update", "col_update", "fit_airwls",
    "wolfe_line_search", "newton_sweep", "fit_newton", "impute_missing",
    "deviance", "null_deviance_fraction", "procrustes_error", "coef_mse",
    "auc", "scree_values", "cross_validate", "bootstrap_refit",
    "simulate_dataset",
]
