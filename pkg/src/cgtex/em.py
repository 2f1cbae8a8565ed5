"""
EM estimation for the CG-E, CG-G and CG-IG models.

All three E-steps reduce to moments of the texture posterior, which is
generalized inverse Gaussian (CG-E, CG-G) or inverse gamma (CG-IG). The
M-steps for mu and Sigma are shared; the texture updates are closed form
(CG-E) or a one-dimensional root of ``psi(alpha) - ln(alpha) = c``.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .marginal import Q_FLOOR, MarginalModel, log_likelihood, segment_log_likelihood
from .signal import MultichannelRecord, SegmentedSignal, SegmentStat, segment, segment_stats
from .special import digamma, dlog_bessel_k_dorder, log_bessel_k, trigamma
from .texture import FAMILIES, Exponential, Gamma, InverseGamma, TextureParams

__all__ = [
    "PosteriorMoments",
    "CgFit",
    "ConvergenceError",
    "gig_moments",
    "e_step_cge",
    "e_step_cgg",
    "e_step_cgig",
    "e_step",
    "m_step_common",
    "m_step_lambda",
    "solve_alpha_newton",
    "solve_alpha_bisect",
    "alpha_equation",
    "initial_params",
    "fit",
    "grid_search_kn",
    "ALPHA_MIN",
    "ALPHA_MAX",
]

log = logging.getLogger(__name__)

ALPHA_MIN, ALPHA_MAX = 1e-6, 1e6
_BRACKET = (1e-3, 1e3)
_T1_REL_FLOOR = 1e-12
_RIDGE_REL = 1e-10


class ConvergenceError(RuntimeError):
    """Root finder gave up; ``last`` holds the final iterate."""

    def __init__(self, message, last):
        super().__init__(message)
        self.last = last


@dataclass(frozen=True)
class PosteriorMoments:
    """Per-segment posterior moments <z_k>, <1/z_k> and <ln z_k>."""

    e_z: np.ndarray
    e_inv_z: np.ndarray
    e_ln_z: np.ndarray

    def __post_init__(self):
        for name in ("e_z", "e_inv_z", "e_ln_z"):
            a = np.array(np.atleast_1d(getattr(self, name)), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def K(self) -> int:
        return self.e_z.shape[0]


@dataclass(frozen=True)
class CgFit:
    """
    Result of one EM run.

    ``trace`` holds ``(iteration, phi, loglik)`` per iteration, where
    ``loglik`` is the segment-level observed-data log-likelihood after the
    M-step. ``llv`` is the per-sample marginal log-likelihood at the final
    parameters.
    """

    family: str
    mu: np.ndarray
    sigma: np.ndarray
    texture: TextureParams
    posterior: PosteriorMoments
    trace: Tuple[Tuple[int, float, float], ...]
    iterations: int
    converged: bool
    K: int
    N: int
    loglik: float
    llv: float
    meta: Dict[str, str] = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.mu.shape[0]


def _floor_t1(t1) -> np.ndarray:
    t1 = np.asarray(t1, dtype=float)
    if np.any(t1 < 0):
        raise ValueError("T1 statistics must be non-negative")
    med = float(np.median(t1)) if t1.size else 0.0
    floor = max(_T1_REL_FLOOR * med, Q_FLOOR)
    low = t1 < floor
    if np.any(low):
        log.warning("%d degenerate segment(s): T1 floored at %.3g", int(low.sum()), floor)
        t1 = np.where(low, floor, t1)
    return t1


def gig_moments(p: float, a, b: float) -> PosteriorMoments:
    """
    Moments of the density proportional to ``z**(p-1) exp(-a/z - b z)``.

    Parameters
    ----------
    p : float
        Kernel order.
    a : array_like
        Positive coefficients of ``1/z``, one per segment.
    b : float
        Positive coefficient of ``z``.
    """
    a = np.asarray(a, dtype=float)
    x = 2.0 * np.sqrt(a * b)
    lk = log_bessel_k(p, x)
    half = 0.5 * np.log(a / b)
    e_z = np.exp(half + log_bessel_k(p + 1.0, x) - lk)
    e_inv = np.exp(-half + log_bessel_k(p - 1.0, x) - lk)
    e_ln = half + dlog_bessel_k_dorder(p, x)
    return PosteriorMoments(e_z, e_inv, e_ln)


def e_step_cge(stats: SegmentStat, lam: float, N: int, d: int) -> PosteriorMoments:
    """Posterior moments under an exponential texture with mean ``lam``."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    return gig_moments(1.0 - 0.5 * N * d, _floor_t1(stats.t1), 1.0 / lam)


def e_step_cgg(stats: SegmentStat, alpha: float, beta: float, N: int, d: int) -> PosteriorMoments:
    """Posterior moments under a Gamma(alpha, rate beta) texture."""
    if not (alpha > 0 and beta > 0):
        raise ValueError("alpha and beta must be positive")
    return gig_moments(alpha - 0.5 * N * d, _floor_t1(stats.t1), beta)


def e_step_cgig(stats: SegmentStat, alpha: float, beta: float, N: int, d: int) -> PosteriorMoments:
    """Posterior moments under an InverseGamma(alpha, scale beta) texture."""
    if not (alpha > 0 and beta > 0):
        raise ValueError("alpha and beta must be positive")
    a_post = 0.5 * N * d + alpha
    b_post = beta + np.asarray(stats.t1, dtype=float)
    e_z = b_post / (a_post - 1.0) if a_post > 1 else np.full(b_post.shape, np.inf)
    return PosteriorMoments(e_z, a_post / b_post, np.log(b_post) - digamma(a_post))


def e_step(texture: TextureParams, stats: SegmentStat, N: int, d: int) -> PosteriorMoments:
    if isinstance(texture, Exponential):
        return e_step_cge(stats, texture.lam, N, d)
    if isinstance(texture, Gamma):
        return e_step_cgg(stats, texture.alpha, texture.beta, N, d)
    if isinstance(texture, InverseGamma):
        return e_step_cgig(stats, texture.alpha, texture.beta, N, d)
    raise TypeError(f"unknown texture {texture!r}")


def _repair_spd(sigma: np.ndarray) -> np.ndarray:
    d = sigma.shape[0]
    floor = _RIDGE_REL * np.trace(sigma) / d
    lo = float(np.linalg.eigvalsh(sigma)[0])
    if lo < floor:
        log.warning("covariance estimate near singular (min eigenvalue %.3g); adding ridge", lo)
        sigma = sigma + (floor - lo) * np.eye(d)
    return sigma


def m_step_common(sig: SegmentedSignal, moments: PosteriorMoments) -> Tuple[np.ndarray, np.ndarray]:
    """
    Weighted updates of mu and Sigma with weights eta_k = <1/z_k>.

    Returns
    -------
    mu : ndarray, shape (d,)
        eta-weighted mean of the segment means.
    sigma : ndarray, shape (d, d)
        ``(1/(N K)) sum_k eta_k sum_n (y - mu)(y - mu)^T``, symmetrized.
    """
    eta = moments.e_inv_z
    if eta.shape != (sig.K,):
        raise ValueError("one posterior moment per segment is required")
    y = sig.segments
    mu = eta @ y.mean(axis=1) / eta.sum()
    r = y - mu
    sigma = np.einsum("k,kni,knj->ij", eta, r, r) / (sig.N * sig.K)
    sigma = 0.5 * (sigma + sigma.T)
    return mu, _repair_spd(sigma)


def m_step_lambda(moments: PosteriorMoments) -> float:
    """Exponential texture mean: the average posterior mean of z."""
    return float(np.mean(moments.e_z))


def alpha_equation(alpha, c):
    """``psi(alpha) - ln(alpha) - c``; the per-segment form of the shape equation."""
    return digamma(alpha) - np.log(alpha) - c


def _shape_constant(target_stat, K, moment_sum, family):
    if K < 1 or not moment_sum > 0:
        raise ValueError("need K >= 1 and a positive moment sum")
    if family in ("gamma", "cgg"):
        return target_stat / K - np.log(moment_sum / K)
    if family in ("inverse-gamma", "cgig"):
        return -target_stat / K - np.log(moment_sum / K)
    raise ValueError(f"unknown family {family!r}")


def _no_root(c):
    # psi(a) - ln(a) increases from -inf to 0, so c >= 0 has no root and
    # the likelihood keeps growing with alpha.
    if c >= 0 or alpha_equation(ALPHA_MAX, c) < 0:
        log.warning("shape equation has no root below %.0e; alpha clamped", ALPHA_MAX)
        return ALPHA_MAX
    if alpha_equation(ALPHA_MIN, c) > 0:
        log.warning("shape equation has no root above %.0e; alpha clamped", ALPHA_MIN)
        return ALPHA_MIN
    return None


def solve_alpha_newton(target_stat: float, K: int, moment_sum: float, family: str,
                       max_iter: int = 200, tol: float = 1e-13) -> float:
    """
    Shape estimate for the gamma or inverse-gamma texture.

    Substituting the companion scale estimate (``beta = K alpha / sum <z>``
    for gamma, ``beta = K alpha / sum <1/z>`` for inverse gamma) leaves
    ``K psi(alpha) - K ln(alpha) - C = 0``. That equation is solved here with
    Newton steps in ``ln(alpha)``, which keeps iterates positive.

    Parameters
    ----------
    target_stat : float
        ``sum_k <ln z_k>``.
    K : int
        Number of segments.
    moment_sum : float
        ``sum_k <z_k>`` (gamma) or ``sum_k <1/z_k>`` (inverse gamma).
    family : {"gamma", "inverse-gamma"}

    Returns
    -------
    float
        Root, clamped to ``[1e-6, 1e6]``.

    Raises
    ------
    ConvergenceError
        No convergence within ``max_iter`` steps.
    """
    c = _shape_constant(target_stat, K, moment_sum, family)
    clamped = _no_root(c)
    if clamped is not None:
        return clamped
    # closed-form start, accurate to a few percent everywhere
    s = -c
    alpha = (3.0 - s + np.sqrt((s - 3.0) ** 2 + 24.0 * s)) / (12.0 * s)
    alpha = min(max(alpha, ALPHA_MIN), ALPHA_MAX)
    for _ in range(max_iter):
        g = alpha_equation(alpha, c)
        dg = alpha * trigamma(alpha) - 1.0
        step = g / dg
        new = min(max(alpha * np.exp(-step), ALPHA_MIN), ALPHA_MAX)
        # psi(a) - ln(a) cancels for large a; steps below its round-off are noise
        noise = 8.0 * np.finfo(float).eps * (abs(np.log(alpha)) + abs(c) + 1.0) / abs(dg)
        if abs(step) <= max(tol, noise):
            return float(new)
        alpha = new
    raise ConvergenceError(f"shape solver did not converge in {max_iter} steps", alpha)


def solve_alpha_bisect(target_stat: float, K: int, moment_sum: float, family: str,
                       bracket: Tuple[float, float] = _BRACKET, tol: float = 1e-14) -> float:
    """Bracketing fallback for ``solve_alpha_newton``; the bracket widens to the clamp range if needed."""
    c = _shape_constant(target_stat, K, moment_sum, family)
    clamped = _no_root(c)
    if clamped is not None:
        return clamped
    lo, hi = bracket
    if alpha_equation(lo, c) > 0:
        lo = ALPHA_MIN
    if alpha_equation(hi, c) < 0:
        hi = ALPHA_MAX
    while hi - lo > tol * hi:
        mid = np.sqrt(lo * hi) if hi / lo > 4 else 0.5 * (lo + hi)
        if alpha_equation(mid, c) < 0:
            lo = mid
        else:
            hi = mid
    return float(0.5 * (lo + hi))


def _solve_alpha(target_stat, K, moment_sum, family):
    try:
        return solve_alpha_newton(target_stat, K, moment_sum, family)
    except ConvergenceError:
        log.warning("Newton shape solver failed; using bisection")
        return solve_alpha_bisect(target_stat, K, moment_sum, family)


def _m_step_texture(texture, moments: PosteriorMoments, fixed_alpha=None) -> TextureParams:
    K = moments.K
    if isinstance(texture, Exponential):
        return Exponential(m_step_lambda(moments))
    if isinstance(texture, Gamma):
        s = float(np.sum(moments.e_z))
        alpha = fixed_alpha if fixed_alpha is not None else _solve_alpha(
            float(np.sum(moments.e_ln_z)), K, s, "gamma")
        return Gamma(alpha, K * alpha / s)
    if isinstance(texture, InverseGamma):
        s = float(np.sum(moments.e_inv_z))
        alpha = fixed_alpha if fixed_alpha is not None else _solve_alpha(
            float(np.sum(moments.e_ln_z)), K, s, "inverse-gamma")
        return InverseGamma(alpha, K * alpha / s)
    raise TypeError(f"unknown texture {texture!r}")


def _texture_vector(t: TextureParams) -> np.ndarray:
    if isinstance(t, Exponential):
        return np.array([t.lam])
    return np.array([t.alpha, t.beta])


def _check_input(sig: SegmentedSignal):
    if sig.K < 2:
        raise ValueError("at least two segments are required")
    if sig.N * sig.d < 2:
        raise ValueError("N*d must be at least 2")
    y = sig.flat()
    spread = y.max(axis=0) - y.min(axis=0)
    flat = np.flatnonzero(spread <= 1e-12 * np.maximum(1.0, np.abs(y).max(axis=0)))
    if flat.size:
        raise ValueError(f"channel(s) {flat.tolist()} have zero variance")


def _kurtosis_ratio(y: np.ndarray) -> float:
    # Mardia kurtosis over its Gaussian value d(d+2); equals E[z^2]/E[z]^2
    # for compound-Gaussian data.
    r = y - y.mean(axis=0)
    S = r.T @ r / len(y)
    w = np.linalg.solve(np.linalg.cholesky(S), r.T)
    d = y.shape[1]
    return float(np.mean(np.sum(w * w, axis=0) ** 2)) / (d * (d + 2))


def initial_params(sig: SegmentedSignal, family: str, fixed_alpha: Optional[float] = None):
    """
    Moment-matched starting point ``(mu0, sigma0, texture0)``.

    ``sigma0`` is the pooled covariance rescaled to trace d and the texture
    mean carries the overall scale, so ``E[z] sigma0`` equals the pooled
    covariance. Gamma and inverse-gamma shapes match the sample kurtosis
    ratio ``E[z^2]/E[z]^2``.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; expected one of {sorted(FAMILIES)}")
    y = sig.flat()
    mu = y.mean(axis=0)
    r = y - mu
    pooled = r.T @ r / len(y)
    m = float(np.trace(pooled)) / sig.d
    sigma = pooled / m
    if family == "cge":
        return mu, sigma, Exponential(m)
    excess = _kurtosis_ratio(y) - 1.0
    if family == "cgg":
        alpha = fixed_alpha if fixed_alpha is not None else (
            float(np.clip(1.0 / excess, 0.1, 100.0)) if excess > 0 else 100.0)
        return mu, sigma, Gamma(alpha, alpha / m)
    alpha = fixed_alpha if fixed_alpha is not None else (
        float(np.clip(2.0 + 1.0 / excess, 2.05, 100.0)) if excess > 0 else 100.0)
    return mu, sigma, InverseGamma(alpha, m * (alpha - 1.0))


def fit(sig: SegmentedSignal, family: str, init: Optional[CgFit] = None, phi_o: float = 1e-5,
        max_iter: int = 1000, fixed_alpha: Optional[float] = None,
        meta: Optional[Dict[str, str]] = None) -> CgFit:
    """
    Fit one compound-Gaussian family by EM.

    Parameters
    ----------
    sig : SegmentedSignal
        K segments of N samples; one texture per segment.
    family : {"cge", "cgg", "cgig"}
    init : CgFit, optional
        Warm start. Its family must match.
    phi_o : float
        Stop once the summed absolute parameter change drops to ``phi_o``.
    max_iter : int
        Iteration cap; ``converged`` is False when it is hit.
    fixed_alpha : float, optional
        Hold the gamma / inverse-gamma shape at this value.
    meta : dict, optional
        Free-form labels (condition, label, source file) carried to the output.

    Returns
    -------
    CgFit
    """
    _check_input(sig)
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    if fixed_alpha is not None and family == "cge":
        raise ValueError("fixed_alpha applies to cgg and cgig only")
    if init is not None:
        if init.family != family:
            raise ValueError(f"init is a {init.family} fit, not {family}")
        mu, sigma, texture = np.asarray(init.mu, float), np.asarray(init.sigma, float), init.texture
    else:
        mu, sigma, texture = initial_params(sig, family, fixed_alpha)
    if fixed_alpha is not None and texture.alpha != fixed_alpha:
        texture = type(texture)(fixed_alpha, texture.beta)

    N, d = sig.N, sig.d
    trace: List[Tuple[int, float, float]] = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        moments = e_step(texture, segment_stats(sig, mu, sigma), N, d)
        new_mu, new_sigma = m_step_common(sig, moments)
        new_tex = _m_step_texture(texture, moments, fixed_alpha)
        phi = float(np.abs(_texture_vector(new_tex) - _texture_vector(texture)).sum()
                    + np.abs(new_mu - mu).sum() + np.abs(new_sigma - sigma).sum())
        mu, sigma, texture = new_mu, new_sigma, new_tex
        ll = segment_log_likelihood(MarginalModel(texture, mu, sigma), sig)
        trace.append((it, phi, ll))
        if phi <= phi_o:
            converged = True
            break

    model = MarginalModel(texture, mu, sigma)
    return CgFit(
        family=family,
        mu=model.mu,
        sigma=model.sigma,
        texture=texture,
        posterior=e_step(texture, segment_stats(sig, mu, sigma), N, d),
        trace=tuple(trace),
        iterations=it,
        converged=converged,
        K=sig.K,
        N=N,
        loglik=trace[-1][2],
        llv=log_likelihood(model, sig),
        meta=dict(meta or {}),
    )


def _worker_count(jobs: int) -> int:
    cap = os.environ.get("CGTEX_THREADS")
    n = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(n, jobs))


def grid_search_kn(record: MultichannelRecord, family: str, K_candidates: Sequence[int],
                   N_candidates: Sequence[int], bins: int = 100, phi_o: float = 1e-5,
                   max_iter: int = 1000) -> Tuple[int, int, Dict[Tuple[int, int], float]]:
    """
    Choose the segmentation (K, N) with the lowest KLD.

    Every feasible pair (``K*N <= T``) is fitted on the first ``K*N``
    samples and scored against one histogram of the whole record, so all
    pairs share a reference. Ties go to the larger K, then the larger N.

    Returns
    -------
    K, N : int
        The selected pair.
    table : dict
        ``(K, N) -> KLD`` for every feasible pair.
    """
    from .evaluation import build_empdf, kld
    from .marginal import pdf_grid

    pairs = [(int(K), int(N)) for K in K_candidates for N in N_candidates if K * N <= record.T]
    if not pairs:
        raise ValueError("no feasible (K, N) pair: every candidate needs K*N <= T")
    emp = build_empdf(record.samples, bins)

    def score(pair):
        K, N = pair
        f = fit(segment(record, K, N), family, phi_o=phi_o, max_iter=max_iter)
        return kld(emp, pdf_grid(MarginalModel.from_fit(f), emp.x_edges, emp.y_edges))

    with ThreadPoolExecutor(max_workers=_worker_count(len(pairs))) as pool:
        table = dict(zip(pairs, pool.map(score, pairs)))
    K, N = min(table, key=lambda p: (table[p], -p[0], -p[1]))
    return K, N, table
