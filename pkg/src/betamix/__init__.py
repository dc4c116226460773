"""Beta-kernel mixtures in mean/scale form: kernels, approximation of
smooth densities, priors and posterior samplers."""

from .errors import (AccuracyError, BetaMixError, BudgetError, CatalogError, ContractError,
                     DegeneracyError, DomainError)
from .kernel import BetaParam, kernel_log_pdf, log_pdf, pdf
from .mixtures import DiscreteMixture, TargetDensity, hellinger, kl, l1, sup_dist, v_p
from .corpus import density_corpus
from .priors import AdaptivePriorConfig, DPPriorConfig, rate_tau
from .sampler import dp_fit, posterior_mean_density, rjmcmc_fit

__version__ = "0.1.0"
