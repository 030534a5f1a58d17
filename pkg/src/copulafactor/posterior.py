"""Posterior summaries, correlation/precision matrices and predictive sampling."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import special, stats

from .data import EmpiricalCdf
from .errors import InputError
from .gibbs import PosteriorDraws, scale_rows
from .stochastic import truncated_standard_normal


def scale_loadings(Lambda):
    """Scaled loadings and uniquenesses for unscaled loadings (rows are variables)."""
    return scale_rows(np.asarray(Lambda, dtype=float))


def correlation_from_loadings(scaled, uniqueness) -> np.ndarray:
    scaled = np.asarray(scaled, dtype=float)
    C = scaled @ scaled.T
    C[np.diag_indices_from(C)] += np.asarray(uniqueness, dtype=float)
    return C


def precision_woodbury(scaled, uniqueness) -> np.ndarray:
    """Inverse of ``L L' + diag(u)`` using only a ``k x k`` factorization.

    Zero entries mean conditional independence of the observed variables
    only when all margins are continuous; with discrete margins they
    describe the latent Gaussians alone.
    """
    L = np.asarray(scaled, dtype=float)
    u = np.asarray(uniqueness, dtype=float)
    if np.any(u <= 0):
        raise InputError("uniquenesses must be positive for the precision to exist")
    Ul = L / u[:, None]  # U^-1 L
    k = L.shape[1]
    inner = np.eye(k) + L.T @ Ul
    chol = np.linalg.cholesky(inner)
    half = np.linalg.solve(chol, Ul.T)  # chol^-1 L' U^-1
    R = -half.T @ half
    R[np.diag_indices_from(R)] += 1.0 / u
    return R


class IndependenceTest(NamedTuple):
    two_sided: float  # Pr(|c| > eps)
    one_sided: float  # Pr(c > eps)


def marginal_independence_test(draws: PosteriorDraws, j: int, j2: int, epsilon: float) -> IndependenceTest:
    if draws.count == 0:
        raise InputError("no retained draws")
    c = np.einsum("th,th->t", draws.loadings[:, j], draws.loadings[:, j2])
    return IndependenceTest(float(np.mean(np.abs(c) > epsilon)), float(np.mean(c > epsilon)))


@dataclass
class PredictiveSample:
    z: np.ndarray  # (N, p)
    y: np.ndarray  # (N, p)


def _map_to_observed(z: np.ndarray, cdfs) -> np.ndarray:
    y = np.empty_like(z)
    u = special.ndtr(z)
    eps = np.finfo(float).tiny
    u = np.clip(u, eps, np.nextafter(1.0, 0.0))
    for j, cdf in enumerate(cdfs):
        y[..., j] = cdf.inverse(u[..., j])
    return y


def sample_predictive(rng, draws: PosteriorDraws, cdfs, per_draw: int = 1) -> PredictiveSample:
    """Posterior predictive draws ``y*`` through the empirical pseudo-inverses.

    Each retained draw contributes ``per_draw`` samples
    ``z* = L eta + e`` with ``eta ~ N(0, I)`` and ``e_j ~ N(0, u_j)``.
    """
    L = np.repeat(draws.loadings, per_draw, axis=0)
    u = np.repeat(draws.uniqueness, per_draw, axis=0)
    eta = rng.standard_normal((L.shape[0], L.shape[2]))
    z = np.einsum("tjh,th->tj", L, eta) + np.sqrt(u) * rng.standard_normal(u.shape)
    return PredictiveSample(z=z, y=_map_to_observed(z, cdfs))


def kendall_tau(x, y) -> float:
    """Tie-corrected Kendall tau-b."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise InputError("kendall_tau needs two paired samples of equal length >= 2")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise InputError("kendall_tau is undefined when a sample is entirely tied")
    return float(stats.kendalltau(x, y, variant="b").statistic)


def _interval_bounds(cdf: EmpiricalCdf, x: float) -> tuple[float, float]:
    """Latent interval ``(a, b]`` matching observed value ``x`` under predictive mapping."""
    lower = special.ndtri(cdf.left_limit(x)) if x > cdf.values[0] else -np.inf
    upper = special.ndtri(cdf(x)) if x < cdf.values[-1] else np.inf
    return float(lower), float(upper)


@dataclass
class ConditionalCdf:
    support: np.ndarray
    cdf: np.ndarray
    effective_draws: float

    @property
    def pmf(self) -> np.ndarray:
        return np.diff(np.concatenate([[0.0], self.cdf]))


def conditional_predictive(
    rng, draws: PosteriorDraws, cdfs, target: int, given: dict, weighted: bool = True
) -> ConditionalCdf:
    """Predictive cdf of one variable given observed values of others.

    For every retained draw an auxiliary ``eta ~ N(0, I)`` is drawn, each
    conditioning latent from its univariate truncated normal given ``eta``,
    and the target's Gaussian conditional cdf given those latents is
    evaluated on the target's observed support. With ``weighted`` the draws
    are importance weighted by the probability of the conditioning box
    given ``eta``, which makes the average exact; without it every draw
    counts equally.

    Parameters
    ----------
    given : dict
        Maps column index to an observed value of that column.
    """
    if target in given:
        raise InputError("target variable cannot also be conditioned on")
    cols = sorted(given)
    bounds = []
    for j in cols:
        x = float(given[j])
        if not cdfs[j].contains(x):
            raise InputError(f"conditioning value {x!r} is not in the observed support of column {j}")
        bounds.append(_interval_bounds(cdfs[j], x))
    a = np.array([b[0] for b in bounds])
    b = np.array([b[1] for b in bounds])

    L = draws.loadings
    T, p, k = L.shape
    Ls = L[:, cols, :]  # (T, s, k)
    us = draws.uniqueness[:, cols]  # (T, s)
    lt = L[:, target, :]  # (T, k)
    eta = rng.standard_normal((T, k))
    mean_s = np.einsum("tsh,th->ts", Ls, eta)
    sd_s = np.sqrt(us)
    lo = (a - mean_s) / sd_s
    hi = (b - mean_s) / sd_s
    zs = mean_s + sd_s * truncated_standard_normal(rng, lo, hi)
    if weighted:
        logw = np.sum(np.log(np.maximum(special.ndtr(hi) - special.ndtr(lo), 1e-300)), axis=1)
        w = np.exp(logw - logw.max())
    else:
        w = np.ones(T)
    w = w / w.sum()

    # moments of z_target | z_S via the k x k Woodbury form
    G = np.einsum("tsh,tsg->thg", Ls / us[:, :, None], Ls)
    inner = np.linalg.inv(np.eye(k) + G)
    proj = np.einsum("thg,tsg->ths", inner, Ls / us[:, :, None])  # (I+G)^-1 L_S' U_S^-1
    m = np.einsum("th,ths,ts->t", lt, proj, zs)
    v = 1.0 - np.einsum("th,thg,tgf,tf->t", lt, inner, G, lt)
    v = np.clip(v, 1e-12, 1.0)

    cdf_t = cdfs[target]
    q = special.ndtri(cdf_t.probs)
    q[-1] = np.inf
    vals = special.ndtr((q[None, :] - m[:, None]) / np.sqrt(v)[:, None])
    est = w @ vals
    return ConditionalCdf(support=cdf_t.values.copy(), cdf=est, effective_draws=float(1.0 / np.sum(w**2)))


def hpd_interval(x, level: float = 0.95) -> tuple[float, float]:
    """Shortest interval containing ``level`` of the sorted draws."""
    x = np.sort(np.asarray(x, dtype=float))
    n = x.size
    m = int(np.ceil(level * n)) - 1
    if m <= 0:
        return float(x[0]), float(x[-1])
    widths = x[m:] - x[: n - m]
    i = int(np.argmin(widths))
    return float(x[i]), float(x[i + m])


def central_interval(x, level: float = 0.95) -> tuple[float, float]:
    lo, hi = np.quantile(x, [(1 - level) / 2, (1 + level) / 2])
    return float(lo), float(hi)


def summarize_trace(x, levels=(0.9, 0.95)) -> dict:
    x = np.asarray(x, dtype=float)
    row = {"mean": float(np.mean(x)), "sd": float(np.std(x, ddof=1)) if x.size > 1 else 0.0}
    for level in levels:
        tag = f"{round(level * 100):d}"
        row[f"q{tag}_lo"], row[f"q{tag}_hi"] = central_interval(x, level)
        row[f"hpd{tag}_lo"], row[f"hpd{tag}_hi"] = hpd_interval(x, level)
    return row


def summarize(draws: PosteriorDraws, levels=(0.9, 0.95)) -> list[dict]:
    """Mean, sd, central and HPD intervals for scaled loadings, uniquenesses and correlations."""
    if draws.count < 100:
        raise InputError("summaries need at least 100 retained draws")
    labels = draws.labels or [f"V{j + 1}" for j in range(draws.p)]
    rows = []
    for j in range(draws.p):
        for h in range(draws.k):
            rows.append({"parameter": "loading", "var1": labels[j], "var2": f"F{h + 1}",
                         **summarize_trace(draws.loadings[:, j, h], levels)})
    for j in range(draws.p):
        rows.append({"parameter": "uniqueness", "var1": labels[j], "var2": "",
                     **summarize_trace(draws.uniqueness[:, j], levels)})
    C = draws.correlations()
    for j in range(draws.p):
        for l in range(j + 1, draws.p):
            rows.append({"parameter": "correlation", "var1": labels[j], "var2": labels[l],
                         **summarize_trace(C[:, j, l], levels)})
    return rows


def observed_kendall(Y: np.ndarray, rng, n_boot: int = 1000, level: float = 0.95):
    """Observed pairwise Kendall taus with percentile-bootstrap intervals.

    ``Y`` may contain NaN; each pair uses its complete rows.
    Returns dict keyed by ``(j, l)`` with ``(tau, lo, hi)``.
    """
    n, p = Y.shape
    out = {}
    for j in range(p):
        for l in range(j + 1, p):
            ok = ~np.isnan(Y[:, j]) & ~np.isnan(Y[:, l])
            x, y = Y[ok, j], Y[ok, l]
            tau = kendall_tau(x, y)
            boots = []
            for _ in range(n_boot):
                idx = rng.integers(0, x.size, x.size)
                if np.ptp(x[idx]) == 0 or np.ptp(y[idx]) == 0:
                    continue
                boots.append(stats.kendalltau(x[idx], y[idx], variant="b").statistic)
            lo, hi = central_interval(boots, level)
            out[(j, l)] = (tau, lo, hi)
    return out


def predictive_kendall(rng, draws: PosteriorDraws, cdfs, n_obs: int, max_draws: int | None = None):
    """Kendall tau of simulated datasets of size ``n_obs``, one per retained draw.

    Returns array of shape (T, p, p); entries are NaN where a simulated
    column was entirely tied.
    """
    T = draws.count if max_draws is None else min(draws.count, max_draws)
    idx = np.linspace(0, draws.count - 1, T).astype(int)
    p = draws.p
    taus = np.full((T, p, p), np.nan)
    for t, d in enumerate(idx):
        L = draws.loadings[d]
        eta = rng.standard_normal((n_obs, L.shape[1]))
        z = eta @ L.T + np.sqrt(draws.uniqueness[d]) * rng.standard_normal((n_obs, p))
        y = _map_to_observed(z, cdfs)
        for j in range(p):
            for l in range(j + 1, p):
                if np.ptp(y[:, j]) > 0 and np.ptp(y[:, l]) > 0:
                    taus[t, j, l] = taus[t, l, j] = stats.kendalltau(y[:, j], y[:, l], variant="b").statistic
    return taus


def factor_signs(loadings: np.ndarray) -> np.ndarray:
    """Per-draw factor reflections, shape (T, k), making each factor's loadings sum non-negative.

    Reflecting a factor leaves the correlation matrix unchanged, so applying
    these signs is a relabeling that makes loadings comparable across draws
    and chains.
    """
    return np.where(np.asarray(loadings).sum(axis=-2) < 0, -1.0, 1.0)


def align_signs(loadings: np.ndarray, scores: np.ndarray | None = None):
    """Loadings (and scores, if given) with :func:`factor_signs` applied."""
    signs = factor_signs(loadings)
    L = np.asarray(loadings, dtype=float) * signs[..., None, :]
    if scores is None:
        return L
    return L, np.asarray(scores, dtype=float) * signs[..., :, None]
