"""
Closed-form marginal densities of the three compound-Gaussian models.

With ``Q = (y - mu)^T Sigma^{-1} (y - mu)``:

- CG-E:  ``2 / ((2 pi)^{d/2} |Sigma|^{1/2} lam) * K_{d/2-1}(sqrt(2Q/lam)) / (lam Q / 2)^{(d/2-1)/2}``
- CG-G:  ``2 beta^alpha / ((2 pi)^{d/2} |Sigma|^{1/2} Gamma(alpha)) * (Q / (2 beta))^{(alpha-d/2)/2} K_{alpha-d/2}(sqrt(2 beta Q))``
- CG-IG: multivariate t, ``Gamma(alpha+d/2) / (Gamma(alpha) (2 pi beta)^{d/2} |Sigma|^{1/2}) (1 + Q/(2 beta))^{-(alpha+d/2)}``

The derivations are in ``docs/math.md``.
"""

from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import special

from .signal import SegmentedSignal, quad_forms, spd_cholesky
from .special import log_bessel_k, log_gig_integral
from .texture import Exponential, Gamma, InverseGamma, TextureParams

__all__ = [
    "MarginalModel",
    "log_pdf",
    "log_likelihood",
    "segment_log_likelihood",
    "pdf_grid",
    "Q_FLOOR",
]

Q_FLOOR = 1e-300
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class MarginalModel:
    """Fitted compound-Gaussian marginal; the family follows from the texture type."""

    texture: TextureParams
    mu: np.ndarray
    sigma: np.ndarray
    chol: np.ndarray = field(init=False, repr=False)
    logdet: float = field(init=False, repr=False)

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        chol = spd_cholesky(sigma)
        if mu.shape != (chol.shape[0],):
            raise ValueError("mu and sigma dimensions disagree")
        for a in (mu, sigma, chol):
            a.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "chol", chol)
        object.__setattr__(self, "logdet", 2.0 * float(np.sum(np.log(np.diag(chol)))))

    @classmethod
    def from_fit(cls, fit) -> "MarginalModel":
        return cls(fit.texture, fit.mu, fit.sigma)

    @property
    def family(self) -> str:
        return self.texture.family

    @property
    def d(self) -> int:
        return self.mu.shape[0]

    def log_pdf_q(self, q):
        """Log density as a function of the Mahalanobis form Q."""
        q = np.asarray(q, dtype=float)
        d = self.d
        t = self.texture
        base = -0.5 * d * _LOG_2PI - 0.5 * self.logdet
        if isinstance(t, InverseGamma):
            a, b = t.alpha, t.beta
            return (base + special.gammaln(a + 0.5 * d) - special.gammaln(a)
                    - 0.5 * d * np.log(b) - (a + 0.5 * d) * np.log1p(q / (2.0 * b)))
        q = np.maximum(q, Q_FLOOR)
        if isinstance(t, Exponential):
            lam = t.lam
            order = 0.5 * d - 1.0
            return (base + np.log(2.0) - np.log(lam)
                    + log_bessel_k(order, np.sqrt(2.0 * q / lam))
                    - 0.5 * order * np.log(0.5 * lam * q))
        if isinstance(t, Gamma):
            a, b = t.alpha, t.beta
            order = a - 0.5 * d
            return (base + np.log(2.0) + a * np.log(b) - special.gammaln(a)
                    + 0.5 * order * np.log(q / (2.0 * b))
                    + log_bessel_k(order, np.sqrt(2.0 * b * q)))
        raise TypeError(f"unknown texture {t!r}")

    def log_pdf(self, y):
        y = np.asarray(y, dtype=float)
        if y.shape[-1] != self.d:
            raise ValueError(f"expected points of dimension {self.d}, got {y.shape[-1]}")
        if not np.all(np.isfinite(y)):
            raise ValueError("points must be finite")
        out = self.log_pdf_q(quad_forms(y, self.mu, self.chol))
        return float(out) if np.ndim(out) == 0 else out

    @property
    def singular_at_mean(self) -> bool:
        """True when the density diverges (integrably) at y = mu."""
        t = self.texture
        if isinstance(t, Exponential):
            return self.d <= 2
        if isinstance(t, Gamma):
            return t.alpha <= 0.5 * self.d
        return False


def log_pdf(model: MarginalModel, y):
    """Marginal log density at one point (d,) or many points (n, d)."""
    return model.log_pdf(y)


def _samples(model, sig):
    y = sig.flat() if isinstance(sig, SegmentedSignal) else np.atleast_2d(np.asarray(sig, dtype=float))
    if y.shape[-1] != model.d:
        raise ValueError(f"model dimension {model.d} does not match data dimension {y.shape[-1]}")
    return y


def log_likelihood(model: MarginalModel, sig: Union[SegmentedSignal, np.ndarray]) -> float:
    """Sum of marginal log densities over every sample (the LLV score)."""
    return float(np.sum(model.log_pdf(_samples(model, sig))))


def segment_log_likelihood(model: MarginalModel, sig: SegmentedSignal, per_segment: bool = False):
    """
    Observed-data log-likelihood with one shared texture per segment.

    ``sum_k ln integral prod_n N(y_nk; mu, z Sigma) p(z) dz``. This is the
    objective EM increases monotonically; it equals ``log_likelihood``
    when N = 1.
    """
    if sig.d != model.d:
        raise ValueError(f"model dimension {model.d} does not match data dimension {sig.d}")
    N, d = sig.N, sig.d
    t1 = np.maximum(0.5 * quad_forms(sig.segments, model.mu, model.chol).sum(axis=1), Q_FLOOR)
    base = -0.5 * N * d * _LOG_2PI - 0.5 * N * model.logdet
    t = model.texture
    if isinstance(t, Exponential):
        ll = base - np.log(t.lam) + log_gig_integral(1.0 - 0.5 * N * d, t1, 1.0 / t.lam)
    elif isinstance(t, Gamma):
        a, b = t.alpha, t.beta
        ll = (base + a * np.log(b) - special.gammaln(a)
              + log_gig_integral(a - 0.5 * N * d, t1, b))
    elif isinstance(t, InverseGamma):
        a, b = t.alpha, t.beta
        a_post = a + 0.5 * N * d
        ll = (base + a * np.log(b) - special.gammaln(a) + special.gammaln(a_post)
              - a_post * np.log(b + t1))
    else:
        raise TypeError(f"unknown texture {t!r}")
    ll = np.atleast_1d(ll)
    return ll if per_segment else float(ll.sum())


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


def _corner_rect_mass(model, w, h, sx, sy):
    # Mass of the rectangle with one corner at mu and sides w (x), h (y),
    # oriented by the signs sx, sy. Polar coordinates about mu remove the
    # singularity; r = rmax(theta) * u**m smooths the radial integrand.
    if w <= 0 or h <= 0:
        return 0.0
    t = model.texture
    order = t.alpha - 1.0 if isinstance(t, Gamma) else 0.0
    m = max(2.0, 4.0 / (2.0 + 2.0 * min(order, 0.0)))
    split = np.arctan2(h, w)
    u = 0.5 * (_GL_NODES + 1.0)
    wu = 0.5 * _GL_WEIGHTS
    total = 0.0
    for lo, hi in ((0.0, split), (split, 0.5 * np.pi)):
        th = lo + (hi - lo) * u
        wth = (hi - lo) * wu
        rmax = np.where(th < split, w / np.cos(th), h / np.sin(th))
        r = rmax[:, None] * u[None, :] ** m
        dr = rmax[:, None] * m * u[None, :] ** (m - 1.0)
        offsets = np.stack([sx * r * np.cos(th)[:, None], sy * r * np.sin(th)[:, None]], axis=-1)
        q = quad_forms(offsets, np.zeros(2), model.chol)
        f = np.exp(model.log_pdf_q(q)) * r * dr
        total += float(wth @ f @ wu)
    return total


def _corner_mass(model, a, b):
    # Signed mass of the rectangle spanned by mu and the node (a, b).
    w, h = a - model.mu[0], b - model.mu[1]
    if w == 0 or h == 0:
        return 0.0
    sx, sy = np.sign(w), np.sign(h)
    return sx * sy * _corner_rect_mass(model, abs(w), abs(h), sx, sy)


def pdf_grid(model: MarginalModel, x_edges, y_edges, order: int = 4, window: int = 1) -> np.ndarray:
    """
    Model probability mass per bin of a 2-D grid.

    Each bin is integrated with an ``order x order`` Gauss-Legendre rule.
    Bins within ``window`` bins of the mean are integrated exactly in polar
    coordinates around the mean instead, which absorbs the (integrable)
    singularity of the CG-E and low-shape CG-G densities at the mean. The
    result is not renormalized.

    Returns
    -------
    ndarray, shape (len(x_edges) - 1, len(y_edges) - 1)
    """
    if model.d != 2:
        raise ValueError("density grids are only defined for d = 2")
    xe = np.asarray(x_edges, dtype=float)
    ye = np.asarray(y_edges, dtype=float)
    if xe.ndim != 1 or ye.ndim != 1 or len(xe) < 2 or len(ye) < 2:
        raise ValueError("edges must be 1-D with at least two entries")
    if np.any(np.diff(xe) <= 0) or np.any(np.diff(ye) <= 0):
        raise ValueError("edges must be strictly increasing")
    nx, ny = len(xe) - 1, len(ye) - 1
    dx, dy = np.diff(xe), np.diff(ye)

    t, wt = np.polynomial.legendre.leggauss(order)
    t, wt = 0.5 * (t + 1.0), 0.5 * wt
    px = xe[:-1, None] + dx[:, None] * t[None, :]
    py = ye[:-1, None] + dy[:, None] * t[None, :]
    pts = np.empty((nx, ny, order, order, 2))
    pts[..., 0] = px[:, None, :, None]
    pts[..., 1] = py[None, :, None, :]
    dens = np.exp(model.log_pdf(pts))
    mass = np.einsum("ijab,a,b->ij", dens, wt, wt) * np.outer(dx, dy)

    mx, my = model.mu
    ix = np.flatnonzero((xe[:-1] <= mx) & (mx <= xe[1:]))
    iy = np.flatnonzero((ye[:-1] <= my) & (my <= ye[1:]))
    if ix.size and iy.size:
        i_lo, i_hi = max(ix.min() - window, 0), min(ix.max() + window, nx - 1)
        j_lo, j_hi = max(iy.min() - window, 0), min(iy.max() + window, ny - 1)
        F = np.array([[_corner_mass(model, xe[i], ye[j]) for j in range(j_lo, j_hi + 2)]
                      for i in range(i_lo, i_hi + 2)])
        mass[i_lo:i_hi + 1, j_lo:j_hi + 1] = F[1:, 1:] - F[:-1, 1:] - F[1:, :-1] + F[:-1, :-1]
    return mass
