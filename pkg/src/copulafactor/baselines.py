"""Parametric comparators: Gaussian, ordinal probit and mixed Gaussian/probit factor models.

Continuous columns are centred and scaled, then modelled as
``y_ij = lambda_j eta_i + e_ij`` with ``1/sigma_j^2 ~ Gamma(2, 2)``. Ordinal
columns follow the data-augmented probit ``y_ij = c`` iff
``gamma_j(c-1) < z_ij <= gamma_jc`` with ``z_ij ~ N(lambda_j eta_i, 1)`` and
flat priors on increasing cutpoints, which are updated by
independence Metropolis-Hastings with proposals centred on empirical-cdf
normal scores. Loadings share the copula model's priors and identification.
Draws are reported on the correlation scale, so they are directly
comparable with the copula model.
"""

from __future__ import annotations

import logging
import time

import numpy as np
from scipy import special

from .data import MixedDataMatrix, build_tie_groups
from .errors import InputError
from .gibbs import (
    ChainState,
    Identification,
    McmcConfig,
    PosteriorDraws,
    _draw_loadings,
    _midrank_scores,
    _principal_loadings,
    _prior_locals,
    free_mask,
    scale_rows,
    update_shrinkage,
)
from .stochastic import make_rng, truncated_standard_normal

log = logging.getLogger(__name__)

SIGMA_SHAPE = 2.0
SIGMA_RATE = 2.0


class _ProbitBlock:
    """Cutpoints and category bookkeeping for all ordinal columns at once.

    ``table[q]`` holds ``-inf, gamma_1, ..., gamma_(c-1), +inf, +inf, ...`` for
    the ``q``-th ordinal column, padded to the widest column.
    """

    def __init__(self, data: MixedDataMatrix, columns: list[int]):
        self.columns = np.array(columns, dtype=int)
        levels = np.array([data.margins[j].levels for j in columns])
        self.levels = levels
        width = int(levels.max()) + 1
        self.table = np.full((len(columns), width), np.inf)
        self.table[:, 0] = -np.inf
        self.scores = np.zeros((len(columns), width))
        rows, cols, codes = [], [], []
        for q, j in enumerate(columns):
            obs = np.flatnonzero(~data.missing[:, j])
            y = data.values[obs, j].astype(int)
            counts = np.bincount(y, minlength=levels[q] + 1)[1:]
            cum = np.cumsum(counts)[:-1] / (obs.size + 1.0)
            # unobserved categories would collapse neighbouring cutpoints
            cum = np.clip(cum, 0.5 / (obs.size + 1), 1 - 0.5 / (obs.size + 1))
            cum = np.maximum.accumulate(cum + np.arange(cum.size) * 1e-9)
            self.scores[q, 1 : levels[q]] = special.ndtri(cum)
            self.table[q, 1 : levels[q]] = self.scores[q, 1 : levels[q]]
            rows.append(obs)
            cols.append(np.full(obs.size, q))
            codes.append(y)
        self.rows = np.concatenate(rows)
        self.q = np.concatenate(cols)
        self.codes = np.concatenate(codes)
        self.flat_rows = self.rows * data.p + self.columns[self.q]
        interior = np.arange(width)[None, :]
        self.interior = (interior >= 1) & (interior < levels[:, None])
        self.accepted = np.zeros(len(columns))
        self.proposed = np.zeros(len(columns))

    def bounds(self, table=None):
        t = self.table if table is None else table
        return t[self.q, self.codes - 1], t[self.q, self.codes]

    def gammas(self, q: int) -> np.ndarray:
        return self.table[q, 1 : self.levels[q]].copy()

    def update_cutpoints(self, rng, means: np.ndarray, lam_norm2: np.ndarray, spread: float):
        """Independence MH on every interior cutpoint, same-parity cutpoints jointly.

        A cutpoint only touches the two categories it separates, so cutpoints
        of equal index parity act on disjoint observations and can be
        accepted or rejected independently.
        """
        scale = np.sqrt(1.0 + lam_norm2)[:, None]
        centers = self.scores * scale
        sd = spread * scale
        width = self.table.shape[1]
        m = means
        for parity in (1, 0):
            sel = self.interior & (np.arange(width)[None, :] % 2 == parity)
            prop = np.where(sel, centers + sd * rng.standard_normal(centers.shape), self.table)
            left = np.roll(self.table, 1, axis=1)
            right = np.roll(self.table, -1, axis=1)
            valid = sel & (prop > left) & (prop < right)
            prop = np.where(valid, prop, self.table)

            # each observation is touched by at most one cutpoint of this parity
            upper = self.codes % 2 == parity
            touched = np.where(upper, self.codes, self.codes - 1)
            lo, hi = self.bounds()
            cdf_lo = special.ndtr(lo - m)
            cdf_hi = special.ndtr(hi - m)
            cdf_new = special.ndtr(prop[self.q, touched] - m)
            with np.errstate(divide="ignore", invalid="ignore"):
                old = np.log(np.maximum(cdf_hi - cdf_lo, 1e-300))
                new = np.log(np.maximum(np.where(upper, cdf_new - cdf_lo, cdf_hi - cdf_new), 1e-300))
            delta = np.bincount(self.q * width + touched, weights=new - old, minlength=self.table.size)
            delta = delta.reshape(self.table.shape)
            with np.errstate(invalid="ignore"):
                log_ratio = (
                    delta
                    + 0.5 * ((prop - centers) / sd) ** 2
                    - 0.5 * ((self.table - centers) / sd) ** 2
                )
                accept = valid & (np.log(rng.random(self.table.shape)) < log_ratio)
            self.table = np.where(accept, prop, self.table)
            self.accepted += accept.sum(axis=1)
            self.proposed += sel.sum(axis=1)

    def acceptance(self) -> np.ndarray:
        return self.accepted / np.maximum(self.proposed, 1)


def _prepare_columns(data: MixedDataMatrix, transforms=None):
    """Standardized continuous columns (NaN where missing) and the ordinal block."""
    X = np.array(data.values, dtype=float)
    transforms = transforms or {}
    ordinal = [j for j, spec in enumerate(data.margins) if spec.is_discrete]
    for j, spec in enumerate(data.margins):
        if spec.is_discrete:
            continue
        obs = ~data.missing[:, j]
        col = X[:, j]
        if j in transforms:
            col = np.where(obs, transforms[j](np.where(obs, col, 1.0)), np.nan)
        mu = np.nanmean(col)
        sd = np.nanstd(col)
        if not np.isfinite(sd) or sd == 0:
            raise InputError(f"continuous column {j} has zero spread after transformation")
        X[:, j] = (col - mu) / sd
    return X, (_ProbitBlock(data, ordinal) if ordinal else None)


def _loadings_posterior(state: ChainState, free, sigma2):
    p, k = state.Lambda.shape
    HH = state.H @ state.H.T
    HZ = (state.H @ state.Z).T * free / sigma2[:, None]
    prec = np.where(free[:, :, None] & free[:, None, :], HH[None] / sigma2[:, None, None], 0.0)
    d = np.arange(k)
    prec[:, d, d] += np.where(free, 1.0 / state.Psi, 1.0)
    cov = np.linalg.inv(prec)
    cov = 0.5 * (cov + np.swapaxes(cov, 1, 2))
    mean = np.einsum("jab,jb->ja", cov, HZ)
    return cov, mean


def _update_scores(state: ChainState, rng, sigma2):
    L = state.Lambda
    Ls = L / sigma2[:, None]
    cov = np.linalg.inv(L.T @ Ls + np.eye(L.shape[1]))
    cov = 0.5 * (cov + cov.T)
    mean = cov @ (Ls.T @ state.Z.T)
    state.H = mean + np.linalg.cholesky(cov) @ rng.standard_normal(mean.shape)


def parametric_fm_sampler(
    data: MixedDataMatrix,
    config: McmcConfig,
    *,
    transforms: dict | None = None,
    proposal_spread: float | None = None,
    rng=None,
    keep_scores: bool = False,
) -> PosteriorDraws:
    """Gibbs sampler for the mixed Gaussian/probit factor model.

    Parameters
    ----------
    transforms : dict, optional
        Column index to a function applied to that continuous column before
        standardization (e.g. ``np.log``).
    proposal_spread : float, optional
        Standard deviation of the cutpoint proposals on the standardized
        latent scale; defaults to ``2/sqrt(n)``.
    """
    config.check_dimensions(data.p)
    rng = make_rng(config.seed) if rng is None else rng
    n, p, k = data.n, data.p, config.k
    X, block = _prepare_columns(data, transforms)
    spread = proposal_spread if proposal_spread is not None else 2.0 / np.sqrt(n)
    ordinal = np.zeros(p, dtype=bool)
    if block is not None:
        ordinal[block.columns] = True
    continuous = ~ordinal
    missing = data.missing

    free = free_mask(p, k, config.identification)
    psi, xi = _prior_locals(rng, config.prior, (p, k))
    # start at the principal axes of the normal scores, as the copula chain does
    scores0 = _midrank_scores(data, build_tie_groups(data))
    Lambda = _principal_loadings(scores0, k, config.identification)
    if config.identification is Identification.LOWER_TRIANGULAR:
        d = np.arange(k)
        Lambda[d, d] = np.maximum(Lambda[d, d], 1e-3)
    A = Lambda.T @ Lambda + np.eye(k)
    H0 = np.linalg.solve(A, Lambda.T @ scores0.T)
    Z = np.where(np.isnan(X), 0.0, X)
    if block is not None:
        lo, hi = block.bounds()
        Z.ravel()[block.flat_rows] = truncated_standard_normal(rng, lo, hi)
    Z[missing] = rng.normal(size=int(missing.sum()))
    state = ChainState(Z=Z, H=H0, Lambda=Lambda, Psi=psi, Xi=xi, V=np.ones(p))
    sigma2 = np.ones(p)

    T = config.retained
    loadings = np.empty((T, p, k))
    uniq = np.empty((T, p))
    scores = np.empty((T, k, n)) if keep_scores else None
    cut_trace = np.empty((T,) + block.table.shape) if block is not None else None
    cut_scaled = np.empty_like(cut_trace) if block is not None else None
    kept = 0
    start = time.perf_counter()
    for t in range(config.burnin + config.iterations):
        cov, mean = _loadings_posterior(state, free, sigma2)
        _draw_loadings(state, rng, cov, mean, free, config.identification)
        update_shrinkage(state, rng, config)
        M = state.H.T @ state.Lambda.T
        if np.any(continuous):
            resid = (state.Z - M)[:, continuous]
            sigma2[continuous] = 1.0 / rng.gamma(
                SIGMA_SHAPE + n / 2.0, 1.0 / (SIGMA_RATE + 0.5 * np.sum(resid**2, axis=0))
            )
        _update_scores(state, rng, sigma2)
        M = state.H.T @ state.Lambda.T
        if block is not None:
            m = M.ravel()[block.flat_rows]
            lam2 = np.sum(state.Lambda[block.columns] ** 2, axis=1)
            block.update_cutpoints(rng, m, lam2, spread)
            lo, hi = block.bounds()
            flat = state.Z.ravel()
            flat[block.flat_rows] = m + truncated_standard_normal(rng, lo - m, hi - m)
            state.Z = flat.reshape(n, p)
        if missing.any():
            noise = np.sqrt(sigma2)[None, :] * rng.standard_normal((n, p))
            state.Z[missing] = (M + noise)[missing]

        after = t - config.burnin + 1
        if after > 0 and after % config.thin == 0:
            loadings[kept], uniq[kept] = scale_rows(state.Lambda, sigma2)
            if keep_scores:
                scores[kept] = state.H
            if block is not None:
                cut_trace[kept] = block.table
                lam2 = np.sum(state.Lambda[block.columns] ** 2, axis=1)
                cut_scaled[kept] = block.table / np.sqrt(1.0 + lam2)[:, None]
            kept += 1
    wall = time.perf_counter() - start

    acceptance = {}
    if block is not None:
        acceptance = dict(zip(block.columns.tolist(), block.acceptance().tolist()))
        for j, rate in acceptance.items():
            log.info("cutpoint acceptance rate for column %d: %.3f", j, rate)
    return PosteriorDraws(
        loadings=loadings,
        uniqueness=uniq,
        scores=scores,
        labels=data.labels,
        config={**config.as_dict(), "model": "gaussian-probit"},
        wall_time=wall,
        extras={
            "acceptance": acceptance,
            "ordinal_columns": [] if block is None else block.columns.tolist(),
            "cutpoints": cut_trace,
            "cutpoints_scaled": cut_scaled,
        },
    )


def gaussian_fm_sampler(data: MixedDataMatrix, config: McmcConfig, **kwargs) -> PosteriorDraws:
    """Gaussian factor model; every margin must be continuous."""
    if any(m.is_discrete for m in data.margins):
        raise InputError("the Gaussian factor model needs all margins continuous")
    draws = parametric_fm_sampler(data, config, **kwargs)
    draws.config["model"] = "gaussian"
    return draws


def probit_fm_sampler(data: MixedDataMatrix, config: McmcConfig, **kwargs) -> PosteriorDraws:
    """Ordinal probit factor model; every margin must be ordinal or binary."""
    if not all(m.is_discrete for m in data.margins):
        raise InputError("the probit factor model needs all margins ordinal or binary")
    draws = parametric_fm_sampler(data, config, **kwargs)
    draws.config["model"] = "probit"
    return draws
