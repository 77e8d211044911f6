"""Bivariate copula link-based survival models and ranking-based variable selection."""

from .copulas import (CopulaFamily, conditional_inverse, copula_cdf, copula_density,
                      copula_partial_u, copula_partial_v, dependence_link,
                      dependence_link_deriv, kendall_tau)
from .data import SurvivalDataset
from .errors import (BRBVSError, ConfigError, DataError, DomainError, NumericalError,
                     UnsupportedFamilyError)
from .fitting import (FittedModel, edf, fisher_diag, fit_model, information_criteria,
                      select_smoothing, trust_region_fit)
from .likelihood import Likelihood, loglik, penalized_loglik
from .margins import (MonotoneSplineConfig, PredictorSpec, PSplineConfig, SurvivalLink,
                      link_survival, marginal_survival_density, monotone_basis, monotone_coefs)
from .measures import MeasureKind, abs_measure, ce_measure, fim_measure
from .model import ModelDesign, ModelSpec
from .selection import (BRBVSParams, BRBVSResult, brbvs_run, estimate_pi, rank_one_subsample,
                        select_s, subsample_plan)

__version__ = "0.1.0"
