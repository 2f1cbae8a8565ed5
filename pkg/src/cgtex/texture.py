"""
Texture priors and the compound-Gaussian simulator.

The texture z_k scales the spatial covariance of segment k:
``y[k, n] = mu + sqrt(z_k) * x[k, n]`` with ``x ~ N(0, Sigma)``.

Parameterizations
-----------------
Exponential(lam)
    Density ``exp(-z / lam) / lam``. Note that ``lam`` is the *mean* of the
    texture, not a rate, even though it is usually called the rate parameter.
    The M-step ``lam = mean(<z_k>)`` relies on this convention.
Gamma(alpha, beta)
    Shape ``alpha``, rate ``beta``: ``beta**alpha z**(alpha-1) exp(-beta z) / Gamma(alpha)``.
InverseGamma(alpha, beta)
    Shape ``alpha``, scale ``beta``: ``beta**alpha z**(-alpha-1) exp(-beta / z) / Gamma(alpha)``.
"""

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import special

from .signal import SegmentedSignal, spd_cholesky

__all__ = [
    "Exponential",
    "Gamma",
    "InverseGamma",
    "TextureParams",
    "FAMILIES",
    "texture_log_pdf",
    "texture_mean",
    "sample_texture",
    "simulate_cg",
]


def _check_positive(**kw):
    for name, v in kw.items():
        if not (np.isfinite(v) and v > 0):
            raise ValueError(f"{name} must be a positive finite number, got {v!r}")


@dataclass(frozen=True)
class Exponential:
    lam: float
    family = "cge"

    def __post_init__(self):
        _check_positive(lam=self.lam)
        object.__setattr__(self, "lam", float(self.lam))


@dataclass(frozen=True)
class Gamma:
    alpha: float
    beta: float
    family = "cgg"

    def __post_init__(self):
        _check_positive(alpha=self.alpha, beta=self.beta)
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))


@dataclass(frozen=True)
class InverseGamma:
    alpha: float
    beta: float
    family = "cgig"

    def __post_init__(self):
        _check_positive(alpha=self.alpha, beta=self.beta)
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))


TextureParams = Union[Exponential, Gamma, InverseGamma]
FAMILIES = {"cge": Exponential, "cgg": Gamma, "cgig": InverseGamma}


def texture_log_pdf(params: TextureParams, z):
    """Log density of the texture prior at ``z > 0``."""
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0) or not np.all(np.isfinite(z)):
        raise ValueError("texture values must be positive and finite")
    if isinstance(params, Exponential):
        out = -np.log(params.lam) - z / params.lam
    elif isinstance(params, Gamma):
        a, b = params.alpha, params.beta
        out = a * np.log(b) - special.gammaln(a) + (a - 1) * np.log(z) - b * z
    elif isinstance(params, InverseGamma):
        a, b = params.alpha, params.beta
        out = a * np.log(b) - special.gammaln(a) - (a + 1) * np.log(z) - b / z
    else:
        raise TypeError(f"unknown texture parameters {params!r}")
    return float(out) if out.ndim == 0 else out


def texture_mean(params: TextureParams) -> float:
    if isinstance(params, Exponential):
        return params.lam
    if isinstance(params, Gamma):
        return params.alpha / params.beta
    if isinstance(params, InverseGamma):
        if params.alpha <= 1:
            raise ValueError("inverse-gamma texture mean is undefined for alpha <= 1")
        return params.beta / (params.alpha - 1)
    raise TypeError(f"unknown texture parameters {params!r}")


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_texture(params: TextureParams, count: int, seed=None) -> np.ndarray:
    """``count`` i.i.d. texture draws; ``seed`` is anything ``default_rng`` accepts."""
    if count < 0:
        raise ValueError("count must be non-negative")
    rng = _rng(seed)
    if isinstance(params, Exponential):
        return rng.exponential(params.lam, size=count)
    if isinstance(params, Gamma):
        return rng.gamma(params.alpha, 1.0 / params.beta, size=count)
    if isinstance(params, InverseGamma):
        return 1.0 / rng.gamma(params.alpha, 1.0 / params.beta, size=count)
    raise TypeError(f"unknown texture parameters {params!r}")


def simulate_cg(params: Optional[TextureParams], mu, sigma, K: int, N: int, seed=None,
                fixed_texture: Optional[float] = None) -> SegmentedSignal:
    """
    Draw a K x N x d compound-Gaussian signal.

    One texture per segment, shared by its N samples. Textures and Gaussian
    components come from two independent child streams of ``seed``.

    Parameters
    ----------
    params : TextureParams or None
        Texture prior. Ignored when ``fixed_texture`` is given.
    mu : array_like, shape (d,)
    sigma : array_like, shape (d, d)
        Symmetric positive-definite spatial covariance.
    K, N : int
        Number of segments and samples per segment.
    seed : int, SeedSequence or None
    fixed_texture : float, optional
        Use ``z_k = fixed_texture`` for every segment (Gaussian data when 1).
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    chol = spd_cholesky(sigma)
    d = chol.shape[0]
    if mu.shape != (d,):
        raise ValueError("mu and sigma dimensions disagree")
    if K < 1 or N < 1:
        raise ValueError("K and N must be positive")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    tex_seq, gauss_seq = ss.spawn(2)
    if fixed_texture is not None:
        _check_positive(fixed_texture=fixed_texture)
        z = np.full(K, float(fixed_texture))
    else:
        z = sample_texture(params, K, np.random.default_rng(tex_seq))
    x = np.random.default_rng(gauss_seq).standard_normal((K, N, d)) @ chol.T
    return SegmentedSignal(mu + np.sqrt(z)[:, None, None] * x)
