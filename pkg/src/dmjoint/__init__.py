"""Bayesian joint modeling of overdispersed count compositions and a
continuous response: Dirichlet-multinomial covariate selection with
spike-and-slab priors plus ilr-balance selection for prediction."""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    Dataset,
    Hyperparams,
    PartitionSpec,
    sbp_pivot,
)
from .sampler import ChainOutput, SamplerConfig, run_chain  # noqa: F401
