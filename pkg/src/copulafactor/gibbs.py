"""Parameter-expanded Gibbs sampler for the Gaussian copula factor model.

The latent data ``Z`` (n x p) follow ``z_i ~ N(Lambda eta_i, I)`` with
``eta_i ~ N(0, I_k)``, constrained so each column respects the ordering of
the observed column (extended rank likelihood). Loadings carry either a GDP
shrinkage prior (through its normal / exponential / gamma mixture) or an
iid normal prior. Working scales ``v_j`` reduce the dependence between ``Z``
and ``Lambda``; only ``k x k`` systems are ever factorized.
"""

from __future__ import annotations

import enum
import logging
import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special

from .data import MixedDataMatrix, TieGroups, build_tie_groups
from .errors import InputError, NumericalError
from .stochastic import (
    GdpParams,
    NormalPrior,
    make_rng,
    sample_inverse_gaussian,
    truncated_standard_normal,
)

log = logging.getLogger(__name__)

_S_FLOOR = 1e-10


class Identification(enum.Enum):
    UNCONSTRAINED = "unconstrained"
    LOWER_TRIANGULAR = "lower-triangular"


@dataclass(frozen=True)
class McmcConfig:
    """Sampler settings.

    ``iterations`` counts post-burn-in sweeps; every ``thin``-th of them is
    retained. ``px_n0`` is the shape/rate of the working prior on ``1/v_j^2``
    (0 gives the improper limit) and ``px_scheme`` picks between the blocked
    (2) and marginal (1) expansion schemes, which coincide when ``px_n0 = 0``.
    """

    iterations: int = 20_000
    burnin: int = 2_000
    thin: int = 10
    k: int = 1
    seed: int | None = None
    prior: GdpParams | NormalPrior = GdpParams()
    identification: Identification = Identification.LOWER_TRIANGULAR
    px_enabled: bool = True
    px_n0: float = 0.0
    px_scheme: int = 2
    debug: bool = False

    def __post_init__(self):
        if self.iterations < 1 or self.thin < 1 or self.burnin < 0:
            raise InputError("iterations and thin must be positive, burnin non-negative")
        if self.k < 1:
            raise InputError("k must be at least 1")
        if self.px_scheme not in (1, 2):
            raise InputError("px_scheme must be 1 or 2")
        if self.px_n0 < 0:
            raise InputError("px_n0 must be non-negative")
        if isinstance(self.identification, str):
            object.__setattr__(self, "identification", Identification(self.identification))

    def check_dimensions(self, p: int):
        if not self.k < p:
            raise InputError(f"number of factors k={self.k} must be smaller than p={p}")

    @property
    def retained(self) -> int:
        return self.iterations // self.thin

    def replace(self, **changes) -> McmcConfig:
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "burnin": self.burnin,
            "thin": self.thin,
            "k": self.k,
            "seed": self.seed,
            "prior": str(self.prior),
            "identification": self.identification.value,
            "px_enabled": self.px_enabled,
            "px_n0": self.px_n0,
            "px_scheme": self.px_scheme,
        }


@dataclass
class ChainState:
    Z: np.ndarray  # (n, p) latent data
    H: np.ndarray  # (k, n) factor scores
    Lambda: np.ndarray  # (p, k) unscaled loadings
    Psi: np.ndarray  # (p, k) local prior variances
    Xi: np.ndarray  # (p, k) local rates
    V: np.ndarray  # (p,) working variances v_j^2

    def copy(self) -> ChainState:
        return ChainState(*(np.array(a) for a in (self.Z, self.H, self.Lambda, self.Psi, self.Xi, self.V)))


@dataclass
class PosteriorDraws:
    """Retained draws on the identified (correlation) scale.

    Attributes
    ----------
    loadings : ndarray, shape (T, p, k)
        Scaled loadings.
    uniqueness : ndarray, shape (T, p)
    scores : ndarray, shape (T, k, n) or None
    """

    loadings: np.ndarray
    uniqueness: np.ndarray
    scores: np.ndarray | None = None
    labels: list[str] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    wall_time: float = 0.0
    interrupted: bool = False
    extras: dict = field(default_factory=dict)

    @property
    def count(self) -> int:
        return self.loadings.shape[0]

    @property
    def p(self) -> int:
        return self.loadings.shape[1]

    @property
    def k(self) -> int:
        return self.loadings.shape[2]

    def correlations(self) -> np.ndarray:
        """All retained correlation matrices, shape (T, p, p)."""
        C = np.einsum("tjh,tlh->tjl", self.loadings, self.loadings)
        idx = np.arange(self.p)
        C[:, idx, idx] += self.uniqueness
        return C

    def mean_correlation(self) -> np.ndarray:
        return self.correlations().mean(axis=0)

    def min_ess(self) -> float:
        """Smallest effective sample size over the scaled loadings."""
        flat = self.loadings.reshape(self.count, -1)
        keep = np.ptp(flat, axis=0) > 0
        if not np.any(keep):
            return float(self.count)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return min(effective_sample_size(flat[:, c]) for c in np.flatnonzero(keep))


def free_mask(p: int, k: int, identification: Identification) -> np.ndarray:
    """Boolean (p, k) mask of loadings that are sampled rather than fixed at 0."""
    if identification is Identification.UNCONSTRAINED:
        return np.ones((p, k), dtype=bool)
    return np.tril(np.ones((p, k), dtype=bool))


@dataclass(frozen=True)
class _Layout:
    """Index bookkeeping for the vectorized latent update."""

    tie_groups: TieGroups
    missing_flat: np.ndarray
    free: np.ndarray
    halves: tuple  # per parity: (positions in tie_groups.order, group of each)

    @classmethod
    def build(cls, data: MixedDataMatrix, tie_groups: TieGroups, config: McmcConfig):
        element_group = np.repeat(np.arange(tie_groups.sizes.size), tie_groups.sizes)
        parity = tie_groups.group_rank[element_group] % 2
        halves = tuple(
            (np.flatnonzero(parity == par), element_group[parity == par]) for par in (0, 1)
        )
        return cls(
            tie_groups=tie_groups,
            missing_flat=np.flatnonzero(data.missing.ravel()),
            free=free_mask(data.p, config.k, config.identification),
            halves=halves,
        )


def _midrank_scores(data: MixedDataMatrix, tie_groups: TieGroups) -> np.ndarray:
    Z = np.zeros((data.n, data.p))
    for j, groups in enumerate(tie_groups.columns):
        n_j = sum(len(rows) for _, rows in groups)
        below = 0
        for _, rows in groups:
            Z[rows, j] = special.ndtri((below + (len(rows) + 1) / 2.0) / (n_j + 1.0))
            below += len(rows)
    return Z


def _prior_locals(rng, prior, shape):
    if isinstance(prior, GdpParams):
        xi = rng.gamma(prior.alpha, 1.0 / prior.beta, size=shape)
        psi = rng.exponential(2.0 / xi**2)
        return psi, xi
    return np.full(shape, prior.variance), np.ones(shape)


def _principal_loadings(Z: np.ndarray, k: int, identification: Identification, sweeps: int = 100):
    """Leading ``k`` principal-axis loadings of ``Z`` by subspace iteration.

    Works with ``n x k`` and ``p x k`` products and ``k x k`` factorizations
    only. Returns unscaled loadings obeying the identification pattern with a
    non-negative leading diagonal.
    """
    n, p = Z.shape
    X = (Z - Z.mean(axis=0)) / np.maximum(Z.std(axis=0), 1e-12)
    Q = np.eye(p, k)
    for _ in range(sweeps):
        W = X.T @ (X @ Q) / n
        chol = np.linalg.cholesky(W.T @ W + 1e-12 * np.eye(k))
        Q = np.linalg.solve(chol, W.T).T
    eig = np.maximum(np.einsum("jh,jh->h", Q, X.T @ (X @ Q) / n), 0.0)
    L = Q * np.sqrt(eig)
    if identification is Identification.LOWER_TRIANGULAR:
        rot, _ = np.linalg.qr(L[:k].T)
        L = L @ rot
    L = L * np.where(np.diag(L[:k]) < 0, -1.0, 1.0)
    norm = np.sum(L**2, axis=1, keepdims=True)
    L = L * np.minimum(1.0, 0.9 / np.sqrt(np.maximum(norm, 1e-300)))
    L = L / np.sqrt(1.0 - np.sum(L**2, axis=1, keepdims=True))
    return L * free_mask(p, k, identification)


def init_state(rng, data: MixedDataMatrix, tie_groups: TieGroups, config: McmcConfig) -> ChainState:
    """Starting point: mid-rank normal scores for ``Z``, principal-axis loadings.

    Starting the loadings at the leading principal axes of the scores (signed
    to satisfy the identification pattern) and the factor scores at their
    conditional means keeps a sign-constrained chain out of the reflected
    region, which a Gibbs scan leaves only very slowly.
    """
    n, p, k = data.n, data.p, config.k
    Z = _midrank_scores(data, tie_groups)
    miss = data.missing
    Z[miss] = rng.normal(size=int(miss.sum()))
    psi, xi = _prior_locals(rng, config.prior, (p, k))
    Lambda = _principal_loadings(Z, k, config.identification)
    if config.identification is Identification.LOWER_TRIANGULAR:
        d = np.arange(k)
        Lambda[d, d] = np.maximum(Lambda[d, d], 1e-3)
    A = Lambda.T @ Lambda + np.eye(k)
    H = np.linalg.solve(A, Lambda.T @ Z.T) + np.linalg.solve(np.linalg.cholesky(A).T, rng.normal(size=(k, n)))
    return ChainState(Z=Z, H=H, Lambda=Lambda, Psi=psi, Xi=xi, V=np.ones(p))


def _loadings_posterior(state: ChainState, free: np.ndarray):
    """Per-row conditional covariance, mean and residual quadratic form.

    Fixed-zero coordinates are decoupled by giving them unit precision and a
    zero right-hand side, so their rows of the covariance are ignorable.
    """
    p, k = state.Lambda.shape
    HH = state.H @ state.H.T
    HZ = (state.H @ state.Z).T * free  # (p, k)
    prec = np.where(
        free[:, :, None] & free[:, None, :], HH[None, :, :], 0.0
    )
    diag = np.arange(k)
    prec[:, diag, diag] += np.where(free, 1.0 / state.Psi, 1.0)
    try:
        cov = np.linalg.inv(prec)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("loadings conditional precision is singular") from exc
    cov = 0.5 * (cov + np.swapaxes(cov, 1, 2))
    mean = np.einsum("jab,jb->ja", cov, HZ)
    s = np.einsum("ij,ij->j", state.Z, state.Z) - np.einsum("ja,ja->j", mean, HZ)
    return cov, mean, s


def residual_quadratic_form(state: ChainState, config: McmcConfig) -> np.ndarray:
    """``s_j = z_j (I - H_j'(Psi_j^-1 + H_j H_j')^-1 H_j) z_j'`` for every column."""
    free = free_mask(*state.Lambda.shape, config.identification)
    return _loadings_posterior(state, free)[2]


def _px_ratio(rng, s, v_prev, n, config: McmcConfig):
    """Draw new working variances; return ``(r, v_new)`` with ``r = v_prev / v_new``."""
    if np.any(s <= _S_FLOOR):
        warnings.warn("residual quadratic form non-positive; flooring it", RuntimeWarning)
        s = np.maximum(s, _S_FLOOR)
    n0 = config.px_n0
    if config.px_scheme == 1 and n0 > 0:
        v_prev = 1.0 / rng.gamma(n0 / 2.0, 2.0 / n0, size=s.shape)
    elif config.px_scheme == 1:
        v_prev = np.ones_like(s)
    inv_v = rng.gamma((n0 + n) / 2.0, 2.0 / (n0 + v_prev * s))
    v_new = 1.0 / inv_v
    return np.sqrt(v_prev / v_new), v_new


def update_px_scales(state: ChainState, rng, config: McmcConfig) -> np.ndarray:
    """Redraw the working scales and move ``Z`` onto the new scale.

    The latent data are multiplied column-wise by ``r = v_old / v_new``;
    the following loadings draw then has its conditional mean scaled by ``r``.
    Returns ``r``. With expansion disabled this is a no-op returning ones.
    """
    p = state.Lambda.shape[0]
    if not config.px_enabled:
        state.V[:] = 1.0
        return np.ones(p)
    s = residual_quadratic_form(state, config)
    r, v_new = _px_ratio(rng, s, state.V, state.Z.shape[0], config)
    state.Z *= r
    state.V = v_new
    return r


def _draw_loadings(state: ChainState, rng, cov, mean, free, identification):
    p, k = mean.shape
    eps = rng.standard_normal((p, k))
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("loadings conditional covariance is not positive definite") from exc
    draw = mean + np.einsum("jab,jb->ja", chol, eps)
    if identification is Identification.LOWER_TRIANGULAR:
        # diagonal from its truncated marginal; the rest of the row follows
        # by conditioning the unconstrained draw on it
        d = np.arange(min(k, p))
        var_d = cov[d, d, d]
        sd = np.sqrt(var_d)
        x_d = mean[d, d] + sd * truncated_standard_normal(rng, -mean[d, d] / sd, np.inf)
        x_d = np.maximum(x_d, np.finfo(float).tiny)
        shift = (x_d - draw[d, d]) / var_d
        draw[d, :] += cov[d, :, d] * shift[:, None]
        draw[d, d] = x_d
    state.Lambda = draw * free


def update_loadings(state: ChainState, rng, config: McmcConfig) -> np.ndarray:
    """Row-wise conjugate Gaussian draw of the free loadings."""
    free = free_mask(*state.Lambda.shape, config.identification)
    cov, mean, _ = _loadings_posterior(state, free)
    _draw_loadings(state, rng, cov, mean, free, config.identification)
    return state.Lambda


def update_shrinkage(state: ChainState, rng, config: McmcConfig):
    """Redraw the GDP mixture locals given the loadings.

    ``xi`` is drawn with ``psi`` integrated out, then ``psi`` given ``xi``,
    which is a joint draw of both from their conditional. Loadings fixed at
    zero by the identification constraint keep prior draws.
    """
    prior = config.prior
    if not isinstance(prior, GdpParams):
        state.Psi[:] = prior.variance
        return state.Psi, state.Xi
    free = free_mask(*state.Lambda.shape, config.identification)
    lam = np.abs(state.Lambda)
    shape = lam.shape
    xi = np.where(
        free,
        rng.gamma(prior.alpha + 1.0, 1.0 / (prior.beta + lam)),
        rng.gamma(prior.alpha, 1.0 / prior.beta, size=shape),
    )
    psi = rng.exponential(2.0 / xi**2)
    active = free & (lam > 0)
    if np.any(active):
        psi[active] = 1.0 / sample_inverse_gaussian(rng, xi[active] / lam[active], xi[active] ** 2)
    state.Psi, state.Xi = psi, xi
    return psi, xi


def update_scores(state: ChainState, rng) -> np.ndarray:
    """Draw every ``eta_i`` from ``N((L'L + I)^-1 L' z_i, (L'L + I)^-1)``."""
    L = state.Lambda
    k = L.shape[1]
    cov = np.linalg.inv(L.T @ L + np.eye(k))
    cov = 0.5 * (cov + cov.T)
    mean = cov @ (L.T @ state.Z.T)
    chol = np.linalg.cholesky(cov)
    state.H = mean + chol @ rng.standard_normal(mean.shape)
    return state.H


def _latent_pass(state: ChainState, rng, layout: _Layout, M: np.ndarray):
    tg = layout.tie_groups
    flat = state.Z.ravel()
    zs = flat[tg.order]
    means = M.ravel()[tg.order]
    for positions, groups in layout.halves:
        if positions.size == 0:
            continue
        gmax = np.maximum.reduceat(zs, tg.starts)
        gmin = np.minimum.reduceat(zs, tg.starts)
        lower = np.where(tg.has_prev, np.roll(gmax, 1), -np.inf)[groups]
        upper = np.where(tg.has_next, np.roll(gmin, -1), np.inf)[groups]
        m = means[positions]
        zs[positions] = m + truncated_standard_normal(rng, lower - m, upper - m)
    flat[tg.order] = zs
    if layout.missing_flat.size:
        mf = M.ravel()[layout.missing_flat]
        flat[layout.missing_flat] = mf + rng.standard_normal(mf.size)
    state.Z = flat.reshape(state.Z.shape)


def update_latent_z(state: ChainState, tie_groups: TieGroups, rng, data=None, layout=None):
    """Redraw ``Z`` from its truncated-normal full conditional.

    Tie groups of one column alternate between even and odd ranks; all rows
    in even-ranked groups are conditionally independent given the odd ones
    and vice versa, so each half is one vectorized draw. Missing entries are
    drawn without truncation.
    """
    if layout is None:
        n, p = state.Z.shape
        missing = np.zeros((n, p), dtype=bool) if data is None else data.missing
        element_group = np.repeat(np.arange(tie_groups.sizes.size), tie_groups.sizes)
        parity = tie_groups.group_rank[element_group] % 2
        layout = _Layout(
            tie_groups=tie_groups,
            missing_flat=np.flatnonzero(missing.ravel()),
            free=np.ones_like(state.Lambda, dtype=bool),
            halves=tuple(
                (np.flatnonzero(parity == par), element_group[parity == par]) for par in (0, 1)
            ),
        )
    M = state.H.T @ state.Lambda.T
    _latent_pass(state, rng, layout, M)
    return state.Z


def sweep(state: ChainState, data, tie_groups, rng, config: McmcConfig, layout=None) -> ChainState:
    """One full scan: working scales, loadings, shrinkage, scores, latent data."""
    if layout is None:
        layout = _Layout.build(data, tie_groups, config)
    free = layout.free
    cov, mean, s = _loadings_posterior(state, free)
    if config.px_enabled:
        r, v_new = _px_ratio(rng, s, state.V, state.Z.shape[0], config)
        state.Z *= r
        state.V = v_new
        mean = mean * r[:, None]
    _draw_loadings(state, rng, cov, mean, free, config.identification)
    update_shrinkage(state, rng, config)
    update_scores(state, rng)
    update_latent_z(state, tie_groups, rng, layout=layout)
    if config.debug and not tie_groups.satisfied_by(state.Z):
        raise NumericalError("latent data left the rank-constraint set")
    return state


def scale_rows(Lambda: np.ndarray, noise_var=1.0):
    """Scaled loadings and uniquenesses for unscaled rows with given noise variance."""
    total = noise_var + np.sum(Lambda**2, axis=-1)
    return Lambda / np.sqrt(total)[..., None], noise_var / total


def run_chain(
    data: MixedDataMatrix,
    config: McmcConfig,
    *,
    tie_groups: TieGroups | None = None,
    rng=None,
    keep_scores: bool = False,
    callback=None,
) -> PosteriorDraws:
    """Run ``burnin + iterations`` sweeps and keep every ``thin``-th draw.

    A ``KeyboardInterrupt`` stops the chain early and returns the draws
    retained so far, flagged as interrupted.
    """
    config.check_dimensions(data.p)
    if tie_groups is None:
        tie_groups = build_tie_groups(data)
    if rng is None:
        rng = make_rng(config.seed)
    layout = _Layout.build(data, tie_groups, config)
    state = init_state(rng, data, tie_groups, config)

    T = config.retained
    loadings = np.empty((T, data.p, config.k))
    uniq = np.empty((T, data.p))
    scores = np.empty((T, config.k, data.n)) if keep_scores else None
    kept = 0
    interrupted = False
    start = time.perf_counter()
    try:
        for t in range(config.burnin + config.iterations):
            sweep(state, data, tie_groups, rng, config, layout)
            after = t - config.burnin + 1
            if after > 0 and after % config.thin == 0:
                loadings[kept], uniq[kept] = scale_rows(state.Lambda)
                if keep_scores:
                    scores[kept] = state.H
                kept += 1
                if callback is not None:
                    callback(kept, state)
    except KeyboardInterrupt:
        interrupted = True
        log.warning("chain interrupted after %d retained draws", kept)
    wall = time.perf_counter() - start
    log.info("chain finished: %d draws in %.1fs", kept, wall)
    return PosteriorDraws(
        loadings=loadings[:kept],
        uniqueness=uniq[:kept],
        scores=None if scores is None else scores[:kept],
        labels=data.labels,
        config=config.as_dict(),
        wall_time=wall,
        interrupted=interrupted,
    )


def autocorrelation(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float) - np.mean(x)
    n = x.size
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n]
    return acov / acov[0]


def effective_sample_size(trace) -> float:
    """Effective sample size by Geyer's initial positive sequence estimator."""
    x = np.asarray(trace, dtype=float)
    n = x.size
    if n < 100:
        raise InputError("effective sample size needs at least 100 draws")
    if np.ptp(x) == 0:
        warnings.warn("constant trace; reporting ESS equal to the draw count", RuntimeWarning)
        return float(n)
    rho = autocorrelation(x)
    pairs = rho[: n - n % 2].reshape(-1, 2).sum(axis=1)
    neg = np.flatnonzero(pairs <= 0)
    m = neg[0] if neg.size else pairs.size
    # monotone sequence estimator
    gamma = np.minimum.accumulate(pairs[:m]) if m else pairs[:0]
    tau = -1.0 + 2.0 * gamma.sum()
    if tau <= 0:
        return float(n)
    return float(min(n, n / tau))
