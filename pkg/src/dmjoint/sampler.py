"""Metropolis-Hastings-within-Gibbs sampler for the joint model.

One iteration sweeps, in order: taxon intercepts ``alpha``; the
covariate-inclusion pairs ``(zeta, phi)`` (between-model add/delete moves
followed by a within-model refresh of every included coefficient); the
latent ``c`` and ``u`` blocks via exact Gibbs draws; and the
balance-inclusion indicators ``xi``. The ``dm_only`` mode skips the response
block, ``lm_only`` skips the count blocks and keeps the composition frozen at
its initial value.

All acceptance ratios are exact because the augmented log likelihood drops
only terms constant in (c, gamma, u); see ``model.log_augmented_dm``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .model import (
    ChainState,
    Dataset,
    GammaField,
    Hyperparams,
    PartitionSpec,
    balance_matrix,
    beta_binomial_logprior,
    build_gamma,
    log_marginal_y,
    spike_slab_logprior,
    standardize_columns,
    zero_replace,
)

__all__ = [
    "SamplerConfig",
    "ChainOutput",
    "run_chain",
    "run_balance_selection",
    "mppi",
    "update_alpha",
    "update_zeta_phi",
    "update_c",
    "update_u",
    "update_xi",
    "initial_state",
    "alpha_log_mh_ratio",
    "phi_log_mh_ratio",
    "add_log_mh_ratio",
    "delete_log_mh_ratio",
    "xi_log_mh_ratio",
]

_MODES = ("joint", "dm_only", "lm_only")
_C_FLOOR = 1e-300  # gamma draws may underflow to exactly 0 for tiny shapes


@dataclass(frozen=True)
class SamplerConfig:
    iterations: int = 20000
    burn_in: int = 10000
    thin: int = 10
    seed: int = 0
    init_zeta_frac: float = 0.01
    init_xi_frac: float = 0.05
    between_moves_per_iter: int = 1
    mode: str = "joint"

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}")
        if self.burn_in >= self.iterations:
            raise ValueError("burn_in must be < iterations")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.between_moves_per_iter < 1:
            raise ValueError("between_moves_per_iter must be >= 1")
        if not (0 <= self.init_zeta_frac < 1) or not (0 <= self.init_xi_frac < 1):
            raise ValueError("init fractions must lie in [0, 1)")

    @property
    def n_retained(self) -> int:
        return (self.iterations - self.burn_in) // self.thin


@dataclass
class ChainOutput:
    """Thinned post-burn-in samples plus summaries."""

    alpha: np.ndarray  # S x J
    phi: np.ndarray  # S x J x P
    zeta: np.ndarray  # S x J x P, uint8
    xi: np.ndarray  # S x M, uint8
    psi: np.ndarray  # S x N x J
    u: np.ndarray  # S x N
    log_posterior: np.ndarray  # full pre-thinning trace, length iterations
    accept: dict  # per-move-type (accepted, proposed) counters
    mppi_zeta: np.ndarray  # J x P
    mppi_xi: np.ndarray  # M
    config: SamplerConfig
    seed: int = field(init=False)

    def __post_init__(self):
        self.seed = self.config.seed

    @property
    def n_samples(self) -> int:
        return self.alpha.shape[0]


# ---------------------------------------------------------------------------
# MH log acceptance ratios (single-move, exact)
# ---------------------------------------------------------------------------


def _column_loglik_diff(c_col, logc_col, lgam_col, gamma_col, lam_new):
    """log p(c_j | gamma_j') - log p(c_j | gamma_j) for one taxon column."""
    gamma_new = np.exp(lam_new)
    if not np.isfinite(gamma_new.sum()):
        return -np.inf, gamma_new, None
    lgam_new = gammaln(gamma_new)
    diff = ((gamma_new - gamma_col) * logc_col).sum() - (lgam_new - lgam_col).sum()
    return diff, gamma_new, lgam_new


def alpha_log_mh_ratio(c_col, lam_col, alpha_old, alpha_new, hyper: Hyperparams):
    """Log MH ratio for an intercept random-walk proposal on one taxon."""
    logc = np.log(c_col)
    lgam = gammaln(np.exp(lam_col))
    diff, _, _ = _column_loglik_diff(
        c_col, logc, lgam, np.exp(lam_col), lam_col + (alpha_new - alpha_old)
    )
    prior = (alpha_old**2 - alpha_new**2) / (2.0 * hyper.sigma_alpha2)
    return diff + prior


def phi_log_mh_ratio(c_col, lam_col, x_p, phi_old, phi_new, hyper: Hyperparams):
    """Log MH ratio for a within-model coefficient refresh."""
    logc = np.log(c_col)
    lgam = gammaln(np.exp(lam_col))
    diff, _, _ = _column_loglik_diff(
        c_col, logc, lgam, np.exp(lam_col), lam_col + (phi_new - phi_old) * x_p
    )
    prior = spike_slab_logprior(phi_new, 1, hyper.r2) - spike_slab_logprior(
        phi_old, 1, hyper.r2
    )
    return diff + prior


def add_log_mh_ratio(c_col, lam_col, x_p, phi_new, hyper: Hyperparams):
    """Log MH ratio for adding one covariate-taxon pair with coefficient phi_new."""
    logc = np.log(c_col)
    lgam = gammaln(np.exp(lam_col))
    diff, _, _ = _column_loglik_diff(
        c_col, logc, lgam, np.exp(lam_col), lam_col + phi_new * x_p
    )
    prior = (
        spike_slab_logprior(phi_new, 1, hyper.r2)
        + beta_binomial_logprior(1, hyper.a, hyper.b)
        - beta_binomial_logprior(0, hyper.a, hyper.b)
    )
    return diff + prior


def delete_log_mh_ratio(c_col, lam_col, x_p, phi_old, hyper: Hyperparams):
    """Log MH ratio for deleting one currently included covariate-taxon pair."""
    logc = np.log(c_col)
    lgam = gammaln(np.exp(lam_col))
    diff, _, _ = _column_loglik_diff(
        c_col, logc, lgam, np.exp(lam_col), lam_col - phi_old * x_p
    )
    prior = (
        beta_binomial_logprior(0, hyper.a, hyper.b)
        - beta_binomial_logprior(1, hyper.a, hyper.b)
        - spike_slab_logprior(phi_old, 1, hyper.r2)
    )
    return diff + prior


def xi_log_mh_ratio(Y, B_std, xi, m, hyper: Hyperparams):
    """Log MH ratio for flipping balance indicator m against the collapsed Y marginal."""
    xi = np.asarray(xi)
    cur = log_marginal_y(Y, B_std[:, xi == 1], hyper)
    flipped = xi.copy()
    flipped[m] = 1 - flipped[m]
    new = log_marginal_y(Y, B_std[:, flipped == 1], hyper)
    prior = beta_binomial_logprior(
        int(flipped[m]), hyper.a_m, hyper.b_m
    ) - beta_binomial_logprior(int(xi[m]), hyper.a_m, hyper.b_m)
    return new - cur + prior


# ---------------------------------------------------------------------------
# Block updates
# ---------------------------------------------------------------------------


def initial_state(data: Dataset, config: SamplerConfig, rng) -> ChainState:
    """Overdispersion-safe starting point: c matched to counts, sparse random supports."""
    n, J, P = data.n_subjects, data.n_taxa, data.n_covariates
    M = J - 1
    zeta = np.zeros((J, P), dtype=np.uint8)
    n_on = int(round(config.init_zeta_frac * J * P))
    if n_on:
        flat = rng.choice(J * P, size=n_on, replace=False)
        zeta.ravel()[flat] = 1
    phi = np.zeros((J, P))
    phi[zeta == 1] = rng.normal(0.0, 0.5, size=int(zeta.sum()))
    xi = np.zeros(M, dtype=np.uint8)
    n_bal = int(round(config.init_xi_frac * M))
    if n_bal:
        xi[rng.choice(M, size=n_bal, replace=False)] = 1
    c = data.Z.astype(float) + 0.5
    T = c.sum(axis=1)
    u = data.row_totals / T
    return ChainState(
        alpha=np.zeros(J), phi=phi, zeta=zeta, c=c, u=u, xi=xi, T=T
    )


def update_alpha(state, data, field, hyper, rng, logc=None, lgam=None):
    """Random-walk MH on every intercept; proposals are independent across taxa."""
    if logc is None:
        logc = np.log(state.c)
    if lgam is None:
        lgam = gammaln(field.gamma)
    J = state.alpha.shape[0]
    step = rng.normal(0.0, hyper.proposal_sd, size=J)
    gamma_new = field.gamma * np.exp(step)[None, :]
    lgam_new = gammaln(gamma_new)
    diff = np.sum((gamma_new - field.gamma) * logc, axis=0) - np.sum(
        lgam_new - lgam, axis=0
    )
    alpha_new = state.alpha + step
    diff += (state.alpha**2 - alpha_new**2) / (2.0 * hyper.sigma_alpha2)
    ok = np.isfinite(diff) & (np.log(rng.uniform(size=J)) < diff)
    if np.any(ok):
        state.alpha[ok] = alpha_new[ok]
        field.lam[:, ok] += step[ok][None, :]
        field.gamma[:, ok] = gamma_new[:, ok]
        lgam[:, ok] = lgam_new[:, ok]
    return int(ok.sum())


def update_zeta_phi(state, data, field, hyper, rng, n_between=1, logc=None, lgam=None):
    """Between-model add/delete moves followed by a within-model refresh."""
    if logc is None:
        logc = np.log(state.c)
    if lgam is None:
        lgam = gammaln(field.gamma)
    J, P = state.zeta.shape
    counts = {"add": 0, "add_prop": 0, "delete": 0, "delete_prop": 0,
              "within": 0, "within_prop": 0}
    log_prior_odds_on = beta_binomial_logprior(1, hyper.a, hyper.b) - \
        beta_binomial_logprior(0, hyper.a, hyper.b)

    def try_move(j, p, phi_new, prior_term, kind):
        lam_new = field.lam[:, j] + (phi_new - state.phi[j, p]) * data.X[:, p]
        diff, gamma_new, lgam_new = _column_loglik_diff(
            state.c[:, j], logc[:, j], lgam[:, j], field.gamma[:, j], lam_new
        )
        counts[kind + "_prop"] += 1
        if np.log(rng.uniform()) < diff + prior_term:
            state.phi[j, p] = phi_new
            field.lam[:, j] = lam_new
            field.gamma[:, j] = gamma_new
            lgam[:, j] = lgam_new
            counts[kind] += 1
            return True
        return False

    for _ in range(n_between):
        j = int(rng.integers(J))
        p = int(rng.integers(P))
        if state.zeta[j, p]:
            prior = -log_prior_odds_on - spike_slab_logprior(
                state.phi[j, p], 1, hyper.r2
            )
            if try_move(j, p, 0.0, prior, "delete"):
                state.zeta[j, p] = 0
        else:
            phi_new = rng.normal(state.phi[j, p], hyper.proposal_sd)
            prior = log_prior_odds_on + spike_slab_logprior(phi_new, 1, hyper.r2)
            if try_move(j, p, phi_new, prior, "add"):
                state.zeta[j, p] = 1

    for j, p in np.argwhere(state.zeta == 1):
        phi_old = state.phi[j, p]
        phi_new = rng.normal(phi_old, hyper.proposal_sd)
        prior = spike_slab_logprior(phi_new, 1, hyper.r2) - spike_slab_logprior(
            phi_old, 1, hyper.r2
        )
        try_move(j, p, phi_new, prior, "within")
    return counts


def update_c(state, data, field, rng):
    """Exact Gibbs draw: c_ij ~ Gamma(z_ij + gamma_ij, u_i + 1)."""
    shape = data.Z + field.gamma
    if np.any(shape <= 0):
        raise ValueError("nonpositive gamma shape in c update")
    state.c = np.maximum(
        rng.gamma(shape, 1.0 / (state.u + 1.0)[:, None]), _C_FLOOR
    )
    state.refresh_totals()


def update_u(state, data, rng):
    """Exact Gibbs draw: u_i ~ Gamma(zdot_i, T_i)."""
    if np.any(state.T <= 0):
        raise ValueError("nonpositive T in u update")
    state.u = rng.gamma(data.row_totals.astype(float), 1.0 / state.T)


def update_xi(state, Y, hyper, rng, B_std, n_moves=1, logml_cur=None):
    """Add/delete flips of balance indicators against the collapsed Y marginal."""
    if logml_cur is None:
        logml_cur = log_marginal_y(Y, B_std[:, state.xi == 1], hyper)
    M = state.xi.shape[0]
    accepted = 0
    for _ in range(n_moves):
        m = int(rng.integers(M))
        flipped = state.xi.copy()
        flipped[m] = 1 - flipped[m]
        logml_new = log_marginal_y(Y, B_std[:, flipped == 1], hyper)
        prior = beta_binomial_logprior(
            int(flipped[m]), hyper.a_m, hyper.b_m
        ) - beta_binomial_logprior(int(state.xi[m]), hyper.a_m, hyper.b_m)
        if np.log(rng.uniform()) < logml_new - logml_cur + prior:
            state.xi = flipped
            logml_cur = logml_new
            accepted += 1
    return accepted, logml_cur


# ---------------------------------------------------------------------------
# Full chain
# ---------------------------------------------------------------------------


def _standardized_balances(state, contrast, delta):
    psi = zero_replace(state.psi, delta)
    B = np.log(psi) @ contrast
    B_std, _, _ = standardize_columns(B)
    return B_std


def _log_posterior(state, data, field, hyper, lgam, logc, logml, mode):
    lp = 0.0
    if mode != "lm_only":
        lp += np.sum((data.Z + field.gamma - 1.0) * logc) - state.c.sum() - lgam.sum()
        lp += np.sum((data.row_totals - 1.0) * np.log(state.u)) - np.sum(
            state.T * state.u
        )
        lp += -0.5 * np.sum(state.alpha**2) / hyper.sigma_alpha2 - 0.5 * len(
            state.alpha
        ) * np.log(2.0 * np.pi * hyper.sigma_alpha2)
        n_on = int(state.zeta.sum())
        on = state.phi[state.zeta == 1]
        lp += -0.5 * np.sum(on**2) / hyper.r2 - 0.5 * n_on * np.log(
            2.0 * np.pi * hyper.r2
        )
        lp += n_on * beta_binomial_logprior(1, hyper.a, hyper.b)
        lp += (state.zeta.size - n_on) * beta_binomial_logprior(0, hyper.a, hyper.b)
    if mode != "dm_only":
        lp += logml
        n_bal = int(state.xi.sum())
        lp += n_bal * beta_binomial_logprior(1, hyper.a_m, hyper.b_m)
        lp += (state.xi.size - n_bal) * beta_binomial_logprior(0, hyper.a_m, hyper.b_m)
    return lp


def run_chain(
    data: Dataset,
    hyper: Hyperparams,
    spec: PartitionSpec,
    config: SamplerConfig,
) -> ChainOutput:
    """Run the full MH-within-Gibbs sweep and return thinned post-burn-in samples.

    Bitwise reproducible given (seed, config, data) on a fixed platform.
    """
    if spec.n_taxa != data.n_taxa:
        raise ValueError("partition spec and data disagree on number of taxa")
    mode = config.mode
    rng = np.random.default_rng(config.seed)
    n, J, P = data.n_subjects, data.n_taxa, data.n_covariates
    M = spec.M
    state = initial_state(data, config, rng)
    field = build_gamma(state.alpha, state.phi, state.zeta, data.X)
    lgam = gammaln(field.gamma)
    logc = np.log(state.c)
    contrast = spec.contrast_matrix()

    S = config.n_retained
    out_alpha = np.empty((S, J))
    out_phi = np.empty((S, J, P))
    out_zeta = np.empty((S, J, P), dtype=np.uint8)
    out_xi = np.empty((S, M), dtype=np.uint8)
    out_psi = np.empty((S, n, J))
    out_u = np.empty((S, n))
    log_post = np.empty(config.iterations)
    accept = {
        "alpha": [0, 0], "add": [0, 0], "delete": [0, 0],
        "within": [0, 0], "xi": [0, 0],
    }

    s = 0
    B_std = None
    logml = 0.0
    for it in range(config.iterations):
        if mode != "lm_only":
            acc = update_alpha(state, data, field, hyper, rng, logc=logc, lgam=lgam)
            accept["alpha"][0] += acc
            accept["alpha"][1] += J
            zc = update_zeta_phi(
                state, data, field, hyper, rng,
                n_between=config.between_moves_per_iter, logc=logc, lgam=lgam,
            )
            for k in ("add", "delete", "within"):
                accept[k][0] += zc[k]
                accept[k][1] += zc[k + "_prop"]
            update_c(state, data, field, rng)
            logc = np.log(state.c)
            update_u(state, data, rng)
        if mode != "dm_only":
            if mode != "lm_only" or B_std is None:
                B_std = _standardized_balances(state, contrast, hyper.delta)
            logml = log_marginal_y(data.Y, B_std[:, state.xi == 1], hyper)
            acc, logml = update_xi(
                state, data.Y, hyper, rng, B_std,
                n_moves=config.between_moves_per_iter, logml_cur=logml,
            )
            accept["xi"][0] += acc
            accept["xi"][1] += config.between_moves_per_iter

        lp = _log_posterior(state, data, field, hyper, lgam, logc, logml, mode)
        if not np.isfinite(lp):
            raise RuntimeError(f"non-finite log posterior at iteration {it}")
        log_post[it] = lp

        t = it + 1
        if t > config.burn_in and (t - config.burn_in) % config.thin == 0:
            out_alpha[s] = state.alpha
            out_phi[s] = state.phi
            out_zeta[s] = state.zeta
            out_xi[s] = state.xi
            out_psi[s] = state.psi
            out_u[s] = state.u
            s += 1

    assert s == S
    return ChainOutput(
        alpha=out_alpha,
        phi=out_phi,
        zeta=out_zeta,
        xi=out_xi,
        psi=out_psi,
        u=out_u,
        log_posterior=log_post,
        accept={k: tuple(v) for k, v in accept.items()},
        mppi_zeta=mppi(out_zeta),
        mppi_xi=mppi(out_xi),
        config=config,
    )


def run_balance_selection(
    B_fixed: np.ndarray,
    Y: np.ndarray,
    hyper: Hyperparams,
    config: SamplerConfig,
) -> ChainOutput:
    """Add/delete balance selection on a fixed, column-standardized balance matrix.

    Used as stage two of the two-step comparator; equivalent to the joint
    sampler's xi block with the composition frozen.
    """
    B_std = np.asarray(B_fixed, dtype=float)
    Y = np.asarray(Y, dtype=float).ravel()
    n, M = B_std.shape
    rng = np.random.default_rng(config.seed)
    xi = np.zeros(M, dtype=np.uint8)
    n_bal = int(round(config.init_xi_frac * M))
    if n_bal:
        xi[rng.choice(M, size=n_bal, replace=False)] = 1

    S = config.n_retained
    out_xi = np.empty((S, M), dtype=np.uint8)
    log_post = np.empty(config.iterations)
    accept = {"xi": [0, 0]}
    logml = log_marginal_y(Y, B_std[:, xi == 1], hyper)

    class _XiState:
        pass

    st = _XiState()
    st.xi = xi
    s = 0
    for it in range(config.iterations):
        acc, logml = update_xi(
            st, Y, hyper, rng, B_std,
            n_moves=config.between_moves_per_iter, logml_cur=logml,
        )
        accept["xi"][0] += acc
        accept["xi"][1] += config.between_moves_per_iter
        n_on = int(st.xi.sum())
        lp = (
            logml
            + n_on * beta_binomial_logprior(1, hyper.a_m, hyper.b_m)
            + (M - n_on) * beta_binomial_logprior(0, hyper.a_m, hyper.b_m)
        )
        if not np.isfinite(lp):
            raise RuntimeError(f"non-finite log posterior at iteration {it}")
        log_post[it] = lp
        t = it + 1
        if t > config.burn_in and (t - config.burn_in) % config.thin == 0:
            out_xi[s] = st.xi
            s += 1

    empty2 = np.empty((S, 0))
    empty3 = np.empty((S, 0, 0))
    return ChainOutput(
        alpha=empty2,
        phi=empty3,
        zeta=empty3.astype(np.uint8),
        xi=out_xi,
        psi=empty3,
        u=empty2,
        log_posterior=log_post,
        accept={k: tuple(v) for k, v in accept.items()},
        mppi_zeta=np.empty((0, 0)),
        mppi_xi=mppi(out_xi),
        config=config,
    )


def mppi(indicator_samples) -> np.ndarray:
    """Marginal posterior probability of inclusion: entrywise mean of 0/1 samples."""
    arr = np.asarray(indicator_samples)
    if arr.shape[0] < 1:
        raise ValueError("need at least one retained sample")
    return arr.mean(axis=0)
