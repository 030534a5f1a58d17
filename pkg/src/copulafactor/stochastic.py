"""Random variates and closed-form densities used by the samplers.

Every sampler takes a :class:`numpy.random.Generator` as its stream; one
generator per chain or replicate keeps runs reproducible from a seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import InputError


def make_rng(seed=None) -> np.random.Generator:
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class GdpParams:
    """Generalized double Pareto prior; ``alpha > 2`` gives finite variance."""

    alpha: float = 3.0
    beta: float = 1.0

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise InputError("GDP parameters must be positive")

    def __str__(self):
        return f"gdp:{self.alpha:g},{self.beta:g}"


@dataclass(frozen=True)
class NormalPrior:
    """Independent ``N(0, variance)`` loadings prior."""

    variance: float = 1.0

    def __post_init__(self):
        if self.variance <= 0:
            raise InputError("normal prior variance must be positive")

    @property
    def precision(self) -> float:
        return 1.0 / self.variance

    def __str__(self):
        return f"normal:{self.variance:g}"


def parse_prior(text: str) -> GdpParams | NormalPrior:
    """Parse ``gdp:ALPHA,BETA`` or ``normal:VARIANCE``."""
    name, _, args = text.strip().lower().partition(":")
    try:
        if name == "gdp":
            if not args:
                return GdpParams()
            alpha, beta = (float(a) for a in args.split(","))
            return GdpParams(alpha, beta)
        if name == "normal":
            return NormalPrior(float(args) if args else 1.0)
    except ValueError as exc:
        raise InputError(f"cannot parse prior {text!r}: {exc}") from exc
    raise InputError(f"unknown prior {text!r}; use gdp:A,B or normal:VAR")


def _log_diff_ndtr(a, b):
    """``log(Phi(b) - Phi(a))`` for ``a < b <= 0`` or central intervals."""
    la = special.log_ndtr(a)
    lb = special.log_ndtr(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        return lb + np.log1p(-np.exp(la - lb)), la


def truncated_standard_normal(rng: np.random.Generator, a, b) -> np.ndarray:
    """Vectorized draws from ``N(0, 1)`` truncated to ``(a, b)``.

    Inverse-cdf sampling carried out in log space: intervals in the upper
    tail are reflected into the lower tail, where ``log Phi`` and its inverse
    stay accurate far beyond the range of ``Phi`` itself. Intervals too
    narrow to resolve this way fall back to a uniform draw on ``(a, b)``.
    """
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    flip = a > 0
    lo = np.where(flip, -b, a)
    hi = np.where(flip, -a, b)
    e = rng.random(lo.shape)

    # plain inverse cdf is exact enough away from the far tail
    p_lo = special.ndtr(lo)
    p_hi = special.ndtr(hi)
    mass = p_hi - p_lo
    with np.errstate(invalid="ignore"):
        x = special.ndtri(p_lo + e * mass)
    slow = ~((hi > -7.0) & (mass > 1e-7 * p_hi) & (x > lo) & (x < hi))
    if np.any(slow):
        x[slow] = _truncated_log_space(lo[slow], hi[slow], e[slow])
    return np.where(flip, -x, x)


def _truncated_log_space(lo, hi, e):
    log_mass, log_lo = _log_diff_ndtr(lo, hi)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_u = np.logaddexp(log_lo, np.log(e) + log_mass)
        x = special.ndtri_exp(np.minimum(log_u, 0.0))
    bad = ~(np.isfinite(x) & (x > lo) & (x < hi))
    if np.any(bad):
        width = hi[bad] - lo[bad]
        x[bad] = np.where(np.isfinite(width), lo[bad] + e[bad] * width, np.nan)
        still = bad.copy()
        still[bad] = ~((x[bad] > lo[bad]) & (x[bad] < hi[bad]))
        x[still] = 0.5 * (lo[still] + hi[still])
    return x


def sample_truncated_normal(rng: np.random.Generator, m, v, a=-np.inf, b=np.inf, size=None):
    """Draw from ``N(m, v)`` truncated to the open interval ``(a, b)``.

    Arguments broadcast against each other; a scalar is returned when all
    inputs are scalars and ``size`` is None.
    """
    m, v, a, b = (np.asarray(x, dtype=float) for x in (m, v, a, b))
    if np.any(v <= 0):
        raise InputError("truncated normal variance must be positive")
    if np.any(a >= b):
        raise InputError("truncated normal needs lower bound < upper bound")
    shape = np.broadcast_shapes(m.shape, v.shape, a.shape, b.shape)
    if size is not None:
        shape = np.broadcast_shapes(shape, tuple(np.atleast_1d(size)))
    sd = np.sqrt(v)
    lo = np.broadcast_to((a - m) / sd, shape)
    hi = np.broadcast_to((b - m) / sd, shape)
    x = m + sd * truncated_standard_normal(rng, lo, hi)
    x = np.clip(x, np.nextafter(a, np.inf), np.nextafter(b, -np.inf))
    return x if x.ndim else x.item()


def sample_inverse_gaussian(rng: np.random.Generator, mean, scale, size=None):
    """Inverse-Gaussian draws with the given mean and scale (shape) parameter."""
    mean = np.asarray(mean, dtype=float)
    scale = np.asarray(scale, dtype=float)
    if np.any(mean <= 0) or np.any(scale <= 0):
        raise InputError("inverse-Gaussian parameters must be positive")
    return rng.wald(mean, scale, size=size)


def sample_gdp(rng: np.random.Generator, params: GdpParams = GdpParams(), size=None):
    """GDP draws through the normal / exponential / gamma scale mixture."""
    xi = rng.gamma(params.alpha, 1.0 / params.beta, size=size)
    psi = rng.exponential(2.0 / xi**2)
    return rng.normal(0.0, np.sqrt(psi))


def gdp_density(x, params: GdpParams = GdpParams()):
    a, b = params.alpha, params.beta
    return a / (2 * b) * (1 + np.abs(x) / b) ** (-(a + 1))


def normal_induced_uniqueness_density(u, k: int, b: float):
    """Density of the uniqueness implied by iid ``N(0, 1/b)`` loadings on ``k`` factors.

    With ``S = sum(lambda^2) ~ Gamma(k/2, rate=b/2)`` and ``u = 1/(1+S)``.
    """
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0) | (u >= 1)):
        raise InputError("uniqueness must lie strictly inside (0, 1)")
    s = (1 - u) / u
    log_dens = (
        0.5 * k * np.log(b / 2)
        - special.gammaln(k / 2)
        - 2 * np.log(u)
        + (k / 2 - 1) * np.log(s)
        - 0.5 * b * s
    )
    return np.exp(log_dens)


def sample_loadings_prior(rng: np.random.Generator, prior, size):
    if isinstance(prior, GdpParams):
        return sample_gdp(rng, prior, size=size)
    return rng.normal(0.0, np.sqrt(prior.variance), size=size)


def simulate_induced_prior(rng: np.random.Generator, prior, k: int, draws: int):
    """Scaled loadings and uniquenesses implied by a loadings prior.

    Returns
    -------
    scaled : ndarray, shape (draws, k)
    uniqueness : ndarray, shape (draws,)
    """
    if draws < 1:
        raise InputError("draws must be at least 1")
    lam = sample_loadings_prior(rng, prior, (draws, k))
    norm = 1.0 + np.sum(lam**2, axis=1)
    return lam / np.sqrt(norm)[:, None], 1.0 / norm
