"""Synthetic data, correlation-matrix losses and the simulation studies.

Studies are reproducible from ``(settings, seed)``: every replicate gets
its own child of a :class:`numpy.random.SeedSequence`, so results do not
depend on how many worker processes share the work.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .baselines import parametric_fm_sampler, probit_fm_sampler, gaussian_fm_sampler
from .data import MarginSpec, MixedDataMatrix
from .errors import InputError
from .gibbs import McmcConfig, run_chain, scale_rows
from .posterior import align_signs, correlation_from_loadings
from .stochastic import GdpParams, sample_gdp, sample_truncated_normal

log = logging.getLogger(__name__)


# -- margins -----------------------------------------------------------------


@dataclass(frozen=True)
class GaussianMargin:
    """Observed column equals the latent standard normal."""

    label: str = ""

    def spec(self) -> MarginSpec:
        return MarginSpec.continuous(self.label)

    def transform(self, rng, z):
        return np.array(z)


@dataclass(frozen=True)
class OrdinalMargin:
    """``levels`` categories with probabilities drawn from ``Dirichlet(concentration)``.

    Fixed ``probs`` may be supplied instead.
    """

    levels: int = 5
    concentration: float = 0.5
    probs: tuple | None = None
    label: str = ""

    def __post_init__(self):
        if self.levels < 2:
            raise InputError("ordinal margins need at least 2 levels")
        if self.probs is not None:
            pr = np.asarray(self.probs, dtype=float)
            if pr.size != self.levels or np.any(pr < 0) or not np.isclose(pr.sum(), 1.0):
                raise InputError("ordinal probabilities must be non-negative, one per level, summing to 1")

    def spec(self) -> MarginSpec:
        if self.levels == 2:
            return MarginSpec.binary(self.label)
        return MarginSpec.ordinal(self.levels, self.label)

    def draw_probs(self, rng) -> np.ndarray:
        if self.probs is not None:
            return np.asarray(self.probs, dtype=float)
        return rng.dirichlet(np.full(self.levels, self.concentration))

    def transform(self, rng, z):
        cuts = special.ndtri(np.cumsum(self.draw_probs(rng))[:-1])
        return 1.0 + np.searchsorted(cuts, z, side="left")


@dataclass(frozen=True)
class EmpiricalMargin:
    """Quantiles of a reference sample."""

    values: tuple
    label: str = ""
    discrete: bool = False

    def spec(self) -> MarginSpec:
        if self.discrete:
            levels = np.unique(self.values).size
            return MarginSpec.binary(self.label) if levels == 2 else MarginSpec.ordinal(levels, self.label)
        return MarginSpec.continuous(self.label)

    def transform(self, rng, z):
        ref = np.sort(np.asarray(self.values, dtype=float))
        u = special.ndtr(z)
        idx = np.clip(np.ceil(u * ref.size).astype(int) - 1, 0, ref.size - 1)
        out = ref[idx]
        if self.discrete:
            # codes 1..c in the order of the reference levels
            out = 1.0 + np.searchsorted(np.unique(ref), out)
        return out


def reference_margins(data: MixedDataMatrix) -> list[EmpiricalMargin]:
    """Empirical margins copied from the observed columns of ``data``."""
    return [
        EmpiricalMargin(tuple(data.column(j)), data.labels[j], data.margins[j].is_discrete)
        for j in range(data.p)
    ]


# -- synthetic data ----------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    """Design of one synthetic dataset.

    Parameters
    ----------
    loadings : {"gdp", "one-factor"}
        ``"gdp"`` draws unscaled loadings iid from ``gdp``; ``"one-factor"``
        sets every scaled loading to ``lambda_tilde`` (``k`` is then 1).
    margins : sequence
        One margin object per column (:class:`GaussianMargin`,
        :class:`OrdinalMargin` or :class:`EmpiricalMargin`).
    """

    n: int
    p: int
    k: int
    margins: tuple
    loadings: str = "gdp"
    lambda_tilde: float = 0.7
    gdp: GdpParams = GdpParams()
    replicates: int = 1
    seed: int | None = None

    def __post_init__(self):
        if self.n < 2 or self.p < 2 or self.k < 1:
            raise InputError("synthetic data need n >= 2, p >= 2 and k >= 1")
        if len(self.margins) != self.p:
            raise InputError(f"expected {self.p} margins, got {len(self.margins)}")
        if self.loadings not in ("gdp", "one-factor"):
            raise InputError("loadings generator must be 'gdp' or 'one-factor'")
        if self.loadings == "one-factor":
            if self.k != 1:
                raise InputError("the shared one-factor design has k = 1")
            if not -1 < self.lambda_tilde < 1:
                raise InputError("the shared scaled loading must lie in (-1, 1)")


def true_scaled_loadings(rng, spec: SyntheticSpec):
    if spec.loadings == "one-factor":
        L = np.full((spec.p, 1), float(spec.lambda_tilde))
        return L, 1.0 - L[:, 0] ** 2
    return scale_rows(sample_gdp(rng, spec.gdp, size=(spec.p, spec.k)))


def generate_synthetic(rng, spec: SyntheticSpec, max_tries: int = 100):
    """One synthetic dataset.

    Returns
    -------
    data : MixedDataMatrix
    C : ndarray, shape (p, p)
        True copula correlation matrix.
    scaled : ndarray, shape (p, k)
        True scaled loadings.

    Discrete columns that come out constant (possible for small ``n`` and
    extreme Dirichlet draws) are regenerated with fresh probabilities.
    """
    scaled, u = true_scaled_loadings(rng, spec)
    C = correlation_from_loadings(scaled, u)
    eta = rng.standard_normal((spec.n, scaled.shape[1]))
    Z = eta @ scaled.T + np.sqrt(u) * rng.standard_normal((spec.n, spec.p))
    Y = np.empty_like(Z)
    for j, margin in enumerate(spec.margins):
        for _ in range(max_tries):
            Y[:, j] = margin.transform(rng, Z[:, j])
            if np.ptp(Y[:, j]) > 0:
                break
        else:
            raise InputError(f"margin {j} keeps producing a constant column")
    data = MixedDataMatrix(Y, [m.spec() for m in spec.margins])
    return data, C, scaled


# -- losses ------------------------------------------------------------------


@dataclass(frozen=True)
class LossReport:
    avg_abs_bias: float
    max_abs_bias: float
    root_squared_error: float
    stein_loss: float

    def as_dict(self) -> dict:
        return {
            "avg_abs_bias": self.avg_abs_bias,
            "max_abs_bias": self.max_abs_bias,
            "root_squared_error": self.root_squared_error,
            "stein_loss": self.stein_loss,
        }


LOSS_NAMES = ("avg_abs_bias", "max_abs_bias", "root_squared_error", "stein_loss")


def loss_suite(C_hat, C_true) -> LossReport:
    """Losses of an estimated correlation matrix against the truth.

    Stein's loss is ``tr(A) - log det(A) - p`` with ``A = C_hat C_true^-1``,
    which is non-negative and zero only at ``C_hat = C_true``.
    """
    C_hat = np.asarray(C_hat, dtype=float)
    C_true = np.asarray(C_true, dtype=float)
    if C_hat.shape != C_true.shape or C_hat.ndim != 2 or C_hat.shape[0] != C_hat.shape[1]:
        raise InputError("loss_suite needs two square matrices of equal size")
    p = C_true.shape[0]
    iu = np.triu_indices(p, 1)
    diff = C_hat[iu] - C_true[iu]
    sign, logdet_true = np.linalg.slogdet(C_true)
    if sign <= 0 or logdet_true < np.log(1e-12) * p:
        raise InputError("true correlation matrix is singular")
    A = np.linalg.solve(C_true, C_hat)  # C^-1 C_hat has the same trace and determinant
    sign_hat, logdet_hat = np.linalg.slogdet(C_hat)
    stein = np.inf if sign_hat <= 0 else float(np.trace(A) - (logdet_hat - logdet_true) - p)
    return LossReport(
        avg_abs_bias=float(np.mean(np.abs(diff))) if diff.size else 0.0,
        max_abs_bias=float(np.max(np.abs(diff))) if diff.size else 0.0,
        root_squared_error=float(np.sqrt(2.0 * np.sum(diff**2))),
        stein_loss=max(stein, 0.0),
    )


# -- replicate plumbing ------------------------------------------------------


def _child_seeds(seed, count: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(count)


def _map(fn, items, workers: int):
    if workers <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# -- efficiency study --------------------------------------------------------

DESK_GRID = ((10, 2, 200), (20, 3, 500))


@dataclass(frozen=True)
class StudySettings:
    """Chain lengths and replicate count shared by the studies."""

    replicates: int = 20
    iterations: int = 20_000
    burnin: int = 2_000
    thin: int = 10
    workers: int = 1

    def mcmc(self, k: int, seed) -> McmcConfig:
        return McmcConfig(iterations=self.iterations, burnin=self.burnin, thin=self.thin, k=k, seed=seed)


FULL_SETTINGS = StudySettings(replicates=100, iterations=100_000, burnin=10_000, thin=20)


def _efficiency_replicate(args):
    cell, truth, settings, seed_seq = args
    p, k, n = cell
    data_rng, copula_seq, param_seq = (np.random.default_rng(s) for s in seed_seq.spawn(3))
    if truth == "probit":
        margins = tuple(OrdinalMargin(5, 0.5, label=f"V{j + 1}") for j in range(p))
        baseline = probit_fm_sampler
    else:
        margins = tuple(GaussianMargin(f"V{j + 1}") for j in range(p))
        baseline = gaussian_fm_sampler
    spec = SyntheticSpec(n=n, p=p, k=k, margins=margins)
    data, C, _ = generate_synthetic(data_rng, spec)
    config = settings.mcmc(k, None)
    fits = {
        "copula": run_chain(data, config, rng=copula_seq),
        truth: baseline(data, config, rng=param_seq),
    }
    losses = {name: loss_suite(d.mean_correlation(), C) for name, d in fits.items()}
    return losses


def efficiency_study(
    seed=None,
    grid=DESK_GRID,
    truth: str = "probit",
    settings: StudySettings = StudySettings(),
) -> list[dict]:
    """Loss ratios of the copula fit against the correctly specified parametric fit.

    ``truth`` is ``"probit"`` (five-level ordinal margins with Dirichlet
    probabilities) or ``"gaussian"`` (Gaussian margins). Returns one record
    per cell, replicate, estimator and loss, plus ``ratio`` records
    (copula loss divided by parametric loss).
    """
    if truth not in ("probit", "gaussian"):
        raise InputError("truth must be 'probit' or 'gaussian'")
    cells = [tuple(int(v) for v in c) for c in grid]
    seeds = _child_seeds(seed, len(cells) * settings.replicates)
    jobs = [
        (cell, truth, settings, seeds[c * settings.replicates + r])
        for c, cell in enumerate(cells)
        for r in range(settings.replicates)
    ]
    results = _map(_efficiency_replicate, jobs, settings.workers)
    records = []
    for (cell, _, _, _), losses, idx in zip(jobs, results, range(len(jobs))):
        p, k, n = cell
        rep = idx % settings.replicates
        base = {"p": p, "k": k, "n": n, "truth": truth, "replicate": rep}
        for name in LOSS_NAMES:
            for est, rep_loss in losses.items():
                records.append({**base, "estimator": est, "loss": name, "value": getattr(rep_loss, name)})
            param = getattr(losses[truth], name)
            ratio = getattr(losses["copula"], name) / param if param > 0 else np.nan
            records.append({**base, "estimator": "ratio", "loss": name, "value": ratio})
    return records


def median_ratios(records: list[dict]) -> dict:
    """Median copula/parametric ratio per ``(p, k, n, loss)`` cell."""
    groups: dict = {}
    for r in records:
        if r["estimator"] == "ratio":
            groups.setdefault((r["p"], r["k"], r["n"], r["loss"]), []).append(r["value"])
    return {key: float(np.nanmedian(v)) for key, v in groups.items()}


# -- misspecification study --------------------------------------------------

# transforms applied to the two continuous political-risk margins by the
# parametric comparator
LOG_TRANSFORMS = {
    "Black.Mkt.Premium": lambda x: np.log(x + 0.001),
    "GDP.Per.Worker": np.log,
}


def comparator_transforms(labels) -> dict:
    return {j: LOG_TRANSFORMS[name] for j, name in enumerate(labels) if name in LOG_TRANSFORMS}


def _misspec_replicate(args):
    margins, lam, n, settings, seed_seq = args
    data_rng, copula_rng, param_rng = (np.random.default_rng(s) for s in seed_seq.spawn(3))
    spec = SyntheticSpec(n=n, p=len(margins), k=1, margins=margins, loadings="one-factor", lambda_tilde=lam)
    data, _, _ = generate_synthetic(data_rng, spec)
    config = settings.mcmc(1, None)
    copula = run_chain(data, config, rng=copula_rng)
    mixed = parametric_fm_sampler(data, config, rng=param_rng, transforms=comparator_transforms(data.labels))
    return (align_signs(copula.loadings)[:, :, 0].mean(axis=0),
            align_signs(mixed.loadings)[:, :, 0].mean(axis=0))


def misspecification_study(
    reference: MixedDataMatrix,
    seed=None,
    lambdas=(0.7, 0.8),
    n: int = 500,
    settings: StudySettings = StudySettings(),
) -> list[dict]:
    """Posterior-mean scaled loadings of the copula and mixed Gaussian/probit fits.

    Data come from a one-factor copula model with every scaled loading equal
    to ``lambda`` and margins copied from ``reference``. Loadings are sign
    aligned per draw before averaging. Returns one record per lambda, replicate,
    model and variable.
    """
    margins = tuple(reference_margins(reference))
    seeds = _child_seeds(seed, len(lambdas) * settings.replicates)
    jobs = [
        (margins, float(lam), n, settings, seeds[i * settings.replicates + r])
        for i, lam in enumerate(lambdas)
        for r in range(settings.replicates)
    ]
    results = _map(_misspec_replicate, jobs, settings.workers)
    records = []
    for idx, ((_, lam, _, _, _), (cop, mix)) in enumerate(zip(jobs, results)):
        rep = idx % settings.replicates
        for model, est in (("copula", cop), ("gaussian-probit", mix)):
            for j, label in enumerate(reference.labels):
                records.append({"lambda": lam, "replicate": rep, "model": model, "variable": label,
                                "loading": float(est[j])})
    return records


# -- conditional dependence --------------------------------------------------


@dataclass(frozen=True)
class DependenceGap:
    estimate: float
    std_error: float
    draws: int
    level: int
    c12: float = field(default=0.0)

    @property
    def z_score(self) -> float:
        if self.std_error == 0:
            return 0.0 if self.estimate == 0 else np.inf * np.sign(self.estimate)
        return self.estimate / self.std_error


def conditional_dependence_demo(
    rng,
    c13: float,
    c23: float,
    probs3=(0.5, 0.5),
    level: int = 1,
    t1: float = 0.5,
    t2: float = 0.5,
    draws: int = 1_000_000,
) -> DependenceGap:
    """Dependence between ``Y1`` and ``Y2`` given a discrete ``Y3`` when ``r12 = 0``.

    ``c12 = c13 * c23`` makes the (1, 2) precision entry vanish, so
    ``Z1`` and ``Z2`` are independent given ``Z3``. Given ``Y3 = level`` the
    gap ``E[g1 g2] - E[g1] E[g2]`` with ``g_j(z3) = Pr(Y_j <= y_j | z3)`` is
    estimated from truncated-normal draws of ``z3``; ``t1`` and ``t2`` are the
    marginal probabilities ``F_j(y_j)``.
    """
    if not (abs(c13) < 1 and abs(c23) < 1):
        raise InputError("c13 and c23 must lie strictly inside (-1, 1) for a positive definite C")
    probs3 = np.asarray(probs3, dtype=float)
    if probs3.ndim != 1 or probs3.size < 2 or np.any(probs3 <= 0) or not np.isclose(probs3.sum(), 1.0):
        raise InputError("Y3 level probabilities must be positive and sum to 1")
    if not 1 <= level <= probs3.size:
        raise InputError(f"level must be in 1..{probs3.size}")
    if not (0 < t1 < 1 and 0 < t2 < 1):
        raise InputError("marginal probabilities t1, t2 must lie in (0, 1)")
    if draws < 2:
        raise InputError("need at least two draws")
    cum = np.concatenate([[0.0], np.cumsum(probs3)])
    cum[-1] = 1.0
    a, b = special.ndtri(cum[level - 1]), special.ndtri(cum[level])
    z3 = sample_truncated_normal(rng, 0.0, 1.0, a, b, size=draws)

    def g(c, t):
        return special.ndtr((special.ndtri(t) - c * z3) / np.sqrt(1.0 - c**2))

    g1, g2 = g(c13, t1), g(c23, t2)
    prod = (g1 - g1.mean()) * (g2 - g2.mean())
    return DependenceGap(
        estimate=float(prod.mean()),
        std_error=float(prod.std(ddof=1) / np.sqrt(draws)),
        draws=draws,
        level=level,
        c12=c13 * c23,
    )


def dependence_correlation(c13: float, c23: float) -> np.ndarray:
    """Correlation matrix with ``c12 = c13 c23``, so the (1, 2) precision entry is zero."""
    C = np.eye(3)
    C[0, 1] = C[1, 0] = c13 * c23
    C[0, 2] = C[2, 0] = c13
    C[1, 2] = C[2, 1] = c23
    if np.linalg.eigvalsh(C)[0] <= 0:
        raise InputError("correlation construction is not positive definite")
    return C
