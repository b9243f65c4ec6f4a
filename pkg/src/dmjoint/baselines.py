"""Two-step Bayesian comparator: count-model selection first, then balance
selection on balances frozen at the posterior-mean composition."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    Dataset,
    Hyperparams,
    PartitionSpec,
    standardize_columns,
    zero_replace,
)
from .predict import TestSet, _alpha0_hat, _ridge_beta, estimate_lambda_test, estimate_psi_test
from .sampler import ChainOutput, SamplerConfig, run_balance_selection, run_chain

__all__ = ["TwoStepOutput", "run_dm_only", "run_lm_balance_selection", "run_two_step",
           "two_step_fitted_y", "two_step_predict_y"]


@dataclass
class TwoStepOutput:
    stage1: ChainOutput
    psi_bar: np.ndarray
    stage2: ChainOutput


def run_dm_only(data: Dataset, hyper: Hyperparams, spec: PartitionSpec,
                config: SamplerConfig) -> ChainOutput:
    """Count-side selection alone: the joint sweep with the response block disabled."""
    if config.mode != "dm_only":
        config = SamplerConfig(
            iterations=config.iterations, burn_in=config.burn_in, thin=config.thin,
            seed=config.seed, init_zeta_frac=config.init_zeta_frac,
            init_xi_frac=config.init_xi_frac,
            between_moves_per_iter=config.between_moves_per_iter, mode="dm_only",
        )
    return run_chain(data, hyper, spec, config)


def run_lm_balance_selection(B_fixed, Y, hyper: Hyperparams,
                             config: SamplerConfig) -> ChainOutput:
    """Balance selection on a fixed, column-standardized balance matrix."""
    return run_balance_selection(B_fixed, Y, hyper, config)


def run_two_step(data: Dataset, hyper: Hyperparams, spec: PartitionSpec,
                 config: SamplerConfig, stage2_seed_offset: int = 1) -> TwoStepOutput:
    """Run both stages; stage two sees balances built from the stage-one mean composition."""
    stage1 = run_dm_only(data, hyper, spec, config)
    psi_bar = stage1.psi.mean(axis=0)
    psi_bar /= psi_bar.sum(axis=1, keepdims=True)
    B = np.log(zero_replace(psi_bar, hyper.delta)) @ spec.contrast_matrix()
    B_std, _, _ = standardize_columns(B)
    cfg2 = SamplerConfig(
        iterations=config.iterations, burn_in=config.burn_in, thin=config.thin,
        seed=config.seed + stage2_seed_offset, init_xi_frac=config.init_xi_frac,
        between_moves_per_iter=config.between_moves_per_iter, mode="lm_only",
    )
    stage2 = run_lm_balance_selection(B_std, data.Y, hyper, cfg2)
    return TwoStepOutput(stage1=stage1, psi_bar=psi_bar, stage2=stage2)


def _frozen_balance_stats(two_step: TwoStepOutput, spec, hyper):
    B = np.log(zero_replace(two_step.psi_bar, hyper.delta)) @ spec.contrast_matrix()
    return standardize_columns(B)


def two_step_fitted_y(two_step: TwoStepOutput, data: Dataset, spec: PartitionSpec,
                      hyper: Hyperparams) -> np.ndarray:
    """In-sample estimates averaged over stage-two selections on the frozen balances."""
    B_std, _, _ = _frozen_balance_stats(two_step, spec, hyper)
    S = two_step.stage2.n_samples
    total = np.zeros(data.n_subjects)
    for s in range(S):
        sel = two_step.stage2.xi[s] == 1
        if not sel.any():
            continue
        beta = _ridge_beta(B_std[:, sel], data.Y, hyper)
        total += B_std[:, sel] @ beta
    return _alpha0_hat(data.Y, hyper) + total / S


def two_step_predict_y(two_step: TwoStepOutput, data: Dataset, test: TestSet,
                       spec: PartitionSpec, hyper: Hyperparams) -> np.ndarray:
    """Test predictions: test compositions from the stage-one chain, coefficients
    from ridge fits on the frozen training balances."""
    B_std, means, sds = _frozen_balance_stats(two_step, spec, hyper)
    psi_test = estimate_psi_test(
        estimate_lambda_test(two_step.stage1, test.X_test), test.Z_test
    )
    B_test = np.log(zero_replace(psi_test, hyper.delta)) @ spec.contrast_matrix()
    S = two_step.stage2.n_samples
    total = np.zeros(test.X_test.shape[0])
    for s in range(S):
        sel = two_step.stage2.xi[s] == 1
        if not sel.any():
            continue
        beta = _ridge_beta(B_std[:, sel], data.Y, hyper)
        total += ((B_test[:, sel] - means[sel]) / sds[sel]) @ beta
    return _alpha0_hat(data.Y, hyper) + total / S
