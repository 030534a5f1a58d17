"""Political-economic risk analysis: copula fit against the Gaussian/probit comparator."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .baselines import parametric_fm_sampler
from .data import MixedDataMatrix, empirical_cdfs
from .gibbs import McmcConfig, PosteriorDraws, run_chain
from .posterior import align_signs, observed_kendall, predictive_kendall, summarize_trace
from .simulation import comparator_transforms

PROTOCOL = McmcConfig(iterations=100_000, burnin=10_000, thin=10, k=1)
PAIR = ("Black.Mkt.Premium", "GDP.Per.Worker")


@dataclass
class ReplicationReport:
    correlation: list[dict]  # one row per model
    kendall: list[dict]  # one row per variable pair
    scores: list[dict]  # one row per country
    draws: dict = field(default_factory=dict)  # model name -> PosteriorDraws


def parametric_predictive_kendall(rng, draws: PosteriorDraws, n_obs: int, max_draws: int | None = None):
    """Kendall taus of datasets simulated from the Gaussian/probit fit.

    Continuous columns keep the latent values (their monotone transforms
    do not change tau); ordinal columns are cut at the scaled cutpoints.
    """
    ordinal = draws.extras.get("ordinal_columns", [])
    cuts = draws.extras.get("cutpoints_scaled")
    T = draws.count if max_draws is None else min(draws.count, max_draws)
    idx = np.linspace(0, draws.count - 1, T).astype(int)
    p = draws.p
    taus = np.full((T, p, p), np.nan)
    for t, d in enumerate(idx):
        L = draws.loadings[d]
        z = rng.standard_normal((n_obs, L.shape[1])) @ L.T
        z += np.sqrt(draws.uniqueness[d]) * rng.standard_normal((n_obs, p))
        y = z.copy()
        for q, j in enumerate(ordinal):
            y[:, j] = np.searchsorted(cuts[d, q], z[:, j])
        for j in range(p):
            for l in range(j + 1, p):
                if np.ptp(y[:, j]) > 0 and np.ptp(y[:, l]) > 0:
                    taus[t, j, l] = taus[t, l, j] = stats.kendalltau(y[:, j], y[:, l], variant="b").statistic
    return taus


def _interval(x, level=0.95):
    x = x[np.isfinite(x)]
    lo, hi = np.quantile(x, [(1 - level) / 2, (1 + level) / 2])
    return float(np.mean(x)), float(lo), float(hi)


def _rescale(x):
    span = np.ptp(x)
    return (x - x.min()) / span if span > 0 else np.zeros_like(x)


def replicate_quinn(
    data: MixedDataMatrix,
    config: McmcConfig = PROTOCOL,
    seed=None,
    n_boot: int = 1000,
    predictive_draws: int = 1000,
) -> ReplicationReport:
    """Fit both models and collect correlation, Kendall's tau and factor-score summaries.

    ``config`` applies to both fits (its ``seed`` is ignored in favour of
    ``seed``). Factor scores are sign aligned per draw, averaged per row
    and rescaled to ``[0, 1]`` so the two models share a range.
    """
    labels = data.labels
    j1, j2 = (labels.index(name) for name in PAIR)
    copula_rng, comp_rng, boot_rng, pred_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4))
    fits = {
        "copula": run_chain(data, config, rng=copula_rng, keep_scores=True),
        "gaussian-probit": parametric_fm_sampler(
            data, config, rng=comp_rng, keep_scores=True, transforms=comparator_transforms(labels)
        ),
    }

    correlation = []
    for model, draws in fits.items():
        c = draws.correlations()[:, j1, j2]
        row = {"model": model, "var1": PAIR[0], "var2": PAIR[1], **summarize_trace(c)}
        row["min_ess"] = draws.min_ess()
        correlation.append(row)

    observed = observed_kendall(data.values, boot_rng, n_boot=n_boot)
    predictive = {
        "copula": predictive_kendall(pred_rng, fits["copula"], empirical_cdfs(data), data.n, predictive_draws),
        "gaussian-probit": parametric_predictive_kendall(pred_rng, fits["gaussian-probit"], data.n, predictive_draws),
    }
    kendall = []
    for (j, l), (tau, lo, hi) in observed.items():
        row = {"var1": labels[j], "var2": labels[l], "observed": tau, "boot_lo": lo, "boot_hi": hi}
        for model, taus in predictive.items():
            mean, plo, phi = _interval(taus[:, j, l])
            row[f"{model}_mean"], row[f"{model}_lo"], row[f"{model}_hi"] = mean, plo, phi
        kendall.append(row)

    names = data.row_labels or [str(i + 1) for i in range(data.n)]
    mean_scores = {}
    for model, draws in fits.items():
        _, scores = align_signs(draws.loadings, draws.scores)
        mean_scores[model] = _rescale(scores[:, 0, :].mean(axis=0))
    gdpw = data.values[:, j2]
    order = np.argsort(-np.nan_to_num(gdpw, nan=-np.inf), kind="stable")
    scores_rows = [
        {"row": names[i], "GDP.Per.Worker": float(gdpw[i]),
         **{f"{m}_score": float(s[i]) for m, s in mean_scores.items()}}
        for i in order
    ]
    return ReplicationReport(correlation=correlation, kendall=kendall, scores=scores_rows, draws=fits)

