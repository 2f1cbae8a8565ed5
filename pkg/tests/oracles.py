"""Independent numerical oracles shared by the test modules."""

import math

import numpy as np
from scipy import integrate

SIGMA_2D = np.array([[2.0, 0.3], [0.3, 1.0]])


def _quad_pieces(f, breaks, tol=1e-13):
    total = 0.0
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        v, _ = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=tol, limit=400)
        total += v
    return total


def quad_log_bessel_k(nu, x):
    """
    ln K_nu(x) from ``K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt``.

    The integrand is rescaled by its peak (at ``t = asinh(nu/x)``) so the
    quadrature never sees overflow or underflow.
    """
    nu = abs(float(nu))

    def g(t):
        return -x * math.cosh(t) + nu * t + math.log1p(math.exp(-2.0 * nu * t)) - math.log(2.0)

    tp = math.asinh(nu / x)
    gp = g(tp)
    w = 10.0 / math.sqrt(x * math.cosh(tp))
    breaks = sorted({0.0, max(0.0, tp - w), tp, tp + w})
    # past tp + w the integrand is below exp(-50) of the peak and falls faster
    tail_end = tp + w
    while g(tail_end) - gp > -800.0:
        tail_end += w
    breaks.append(tail_end)
    return gp + math.log(_quad_pieces(lambda t: math.exp(g(t) - gp), breaks))


def quad_kernel_moments(p, a, b):
    """
    <z>, <1/z>, <ln z> under the density proportional to
    ``z**(p-1) exp(-a/z - b z)`` (``b = 0`` allowed when ``p < 0``).

    Integrates in ``s = ln z``, where the log-integrand is concave.
    """
    def f(s):
        return p * s - a * math.exp(-s) - b * math.exp(s)

    if b > 0:
        s0 = math.log((p + math.sqrt(p * p + 4 * a * b)) / (2 * b))
    else:
        s0 = math.log(a / -p)
    f0 = f(s0)
    width = 1.0 / math.sqrt(a * math.exp(-s0) + b * math.exp(s0))
    lo, hi = s0, s0
    while f(lo) - f0 > -745.0:
        lo -= width
    while f(hi) - f0 > -745.0:
        hi += width
    breaks = sorted({lo, s0 - width, s0, s0 + width, hi})

    def mom(h):
        return _quad_pieces(lambda s: h(s) * math.exp(f(s) - f0), breaks)

    z0 = mom(lambda s: 1.0)
    return (mom(math.exp) / z0, mom(lambda s: math.exp(-s)) / z0, mom(lambda s: s) / z0)


_BERNOULLI = [1 / 6, -1 / 30, 1 / 42, -1 / 30, 5 / 66, -691 / 2730, 7 / 6, -3617 / 510]


def series_digamma(x):
    """psi(x) via the recurrence up to x >= 20 and the Bernoulli asymptotic series."""
    acc = 0.0
    while x < 20.0:
        acc -= 1.0 / x
        x += 1.0
    s = math.log(x) - 0.5 / x
    for k, b in enumerate(_BERNOULLI, start=1):
        s -= b / (2 * k * x ** (2 * k))
    return s + acc
