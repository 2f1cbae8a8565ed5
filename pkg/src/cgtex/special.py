"""
Log-scaled special functions used by the texture posteriors and marginals.

Everything here works on natural logarithms so that Bessel functions with
orders of a few tens (or thousands, for long segments) never overflow.

``log_bessel_k`` evaluates ln K_nu(x) as follows:

- moderate orders: ``scipy.special.kve`` (exponentially scaled, AMOS based),
- orders past the overflow range of ``kve``: forward recurrence on the ratio
  K_{m+1}/K_m, accumulated in log space (forward recurrence is stable for K),
- x below 1e-100: leading small-argument terms of the series expansion.
"""

import numpy as np
from scipy import special

__all__ = [
    "log_bessel_k",
    "log_bessel_k_ratio",
    "dlog_bessel_k_dorder",
    "digamma",
    "trigamma",
    "gammaln",
    "log_gig_integral",
]

MAX_ORDER = 1.0e4
_DIRECT_MAX_ORDER = 50.0
_TINY_X = 1.0e-100


def _check_args(order, x):
    nu = np.asarray(order, dtype=float)
    x = np.asarray(x, dtype=float)
    if not (np.all(np.isfinite(nu)) and np.all(np.isfinite(x))):
        raise ValueError("Bessel order and argument must be finite")
    if np.any(x <= 0):
        raise ValueError("Bessel argument must be strictly positive")
    if np.any(np.abs(nu) > MAX_ORDER):
        raise ValueError(f"|order| must not exceed {MAX_ORDER:g}")
    # K is even in nu with zero slope at 0; subnormal orders break kve
    nu = np.where(np.abs(nu) < 1e-150, 0.0, np.abs(nu))
    nu, x = np.broadcast_arrays(nu, x)
    return nu, x


def _log_k_small_x(nu, x):
    # Leading terms of the series about x = 0; relative error O(x^2).
    out = np.empty_like(x)
    L = np.log(0.5 * x)

    zero = nu < 1e-8
    out[zero] = np.log(-L[zero] - np.euler_gamma)

    frac = (~zero) & (nu < 1.0)
    if np.any(frac):
        v, l = nu[frac], L[frac]
        # K_v = [G(1+v) (x/2)^-v - G(1-v) (x/2)^v] / (2v)
        ratio = np.exp(special.gammaln(1 - v) - special.gammaln(1 + v) + 2 * v * l)
        out[frac] = special.gammaln(1 + v) - v * l + np.log1p(-ratio) - np.log(2 * v)

    big = nu >= 1.0
    v = nu[big]
    out[big] = special.gammaln(v) + (v - 1) * np.log(2.0) - v * np.log(x[big])
    return out


def _log_k_recurrence(nu, x):
    # Start from nu0 in [0, 1) and walk up with r_m = K_{m+1}/K_m,
    # r_m = 1/r_{m-1} + 2m/x.
    n = np.floor(nu)
    nu0 = nu - n
    with np.errstate(divide="ignore", over="ignore"):
        l0 = np.log(special.kve(nu0, x)) - x
        l1 = np.log(special.kve(nu0 + 1.0, x)) - x
    out = np.where(n == 0, l0, l1)
    r = np.exp(l1 - l0)
    m = nu0 + 1.0
    steps = int(n.max()) - 1 if n.size else 0
    for j in range(1, steps + 1):
        active = n > j
        if not np.any(active):
            break
        r = np.where(active, 1.0 / r + 2.0 * m / x, r)
        out = np.where(active, out + np.log(r), out)
        m = m + 1.0
    return out


def log_bessel_k(order, x):
    """
    Natural logarithm of the modified Bessel function of the second kind.

    Parameters
    ----------
    order : float or array_like
        Real order nu. K is even in nu, so only |nu| matters.
    x : float or array_like
        Strictly positive argument. Broadcast against ``order``.

    Returns
    -------
    float or ndarray
        ln K_nu(x), finite for every valid input.

    Raises
    ------
    ValueError
        If ``x <= 0``, if any input is non-finite, or if ``|order| > 1e4``.
    """
    scalar = np.ndim(order) == 0 and np.ndim(x) == 0
    nu, x = _check_args(order, x)
    nu = nu.ravel()
    xf = x.ravel()
    out = np.empty(xf.shape)

    tiny = xf < _TINY_X
    if np.any(tiny):
        out[tiny] = _log_k_small_x(nu[tiny], xf[tiny])

    rest = ~tiny
    direct_ok = rest & (nu <= _DIRECT_MAX_ORDER)
    if np.any(direct_ok):
        with np.errstate(divide="ignore", over="ignore"):
            val = np.log(special.kve(nu[direct_ok], xf[direct_ok])) - xf[direct_ok]
        out[direct_ok] = val
        bad = ~np.isfinite(val)
        if np.any(bad):
            idx = np.flatnonzero(direct_ok)[bad]
            out[idx] = _log_k_recurrence(nu[idx], xf[idx])

    recur = rest & ~direct_ok
    if np.any(recur):
        out[recur] = _log_k_recurrence(nu[recur], xf[recur])

    out = out.reshape(x.shape)
    return float(out) if scalar else out


def log_bessel_k_ratio(order, x, order_shift):
    """Return ln K_{order+order_shift}(x) - ln K_order(x)."""
    if order_shift == 0:
        nu, xx = _check_args(order, x)
        z = np.zeros(xx.shape)
        return float(z) if z.ndim == 0 else z
    return log_bessel_k(np.asarray(order) + order_shift, x) - log_bessel_k(order, x)


def dlog_bessel_k_dorder(order, x):
    """
    Derivative of ln K_nu(x) with respect to the order nu.

    Central difference with step ``1e-5 * max(1, |nu|)``. Exactly zero at
    ``nu = 0`` because the log-Bessel function is even in the order.
    """
    nu = np.asarray(order, dtype=float)
    h = 1e-5 * np.maximum(1.0, np.abs(nu))
    d = (log_bessel_k(nu + h, x) - log_bessel_k(nu - h, x)) / (2.0 * h)
    return float(d) if np.ndim(d) == 0 else d


def log_gig_integral(p, a, b):
    """
    ln of the integral over z > 0 of ``z**(p-1) * exp(-a/z - b*z)``.

    Closed form ``2 (a/b)**(p/2) K_p(2 sqrt(a b))`` for ``a, b > 0``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    r = np.log(2.0) + 0.5 * np.asarray(p) * np.log(a / b) + log_bessel_k(p, 2.0 * np.sqrt(a * b))
    return float(r) if np.ndim(r) == 0 else r


def _positive(x, name):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)) or np.any(x <= 0):
        raise ValueError(f"{name} is defined here for finite x > 0 only")
    return x


def digamma(x):
    """psi(x) for x > 0."""
    r = special.digamma(_positive(x, "digamma"))
    return float(r) if np.ndim(r) == 0 else r


def trigamma(x):
    """psi'(x) for x > 0."""
    r = special.polygamma(1, _positive(x, "trigamma"))
    return float(r) if np.ndim(r) == 0 else r


def gammaln(x):
    """ln Gamma(x) for x > 0."""
    r = special.gammaln(_positive(x, "gammaln"))
    return float(r) if np.ndim(r) == 0 else r
