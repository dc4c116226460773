"""Beta kernels in mean/scale coordinates.

A kernel is indexed by a scale ``alpha > 0`` and a mean ``eps in (0, 1)``;
the usual shape pair is ``a = alpha / (1 - eps)``, ``b = alpha / eps``.
The log-density is evaluated in the form

    log g = log(sqrt(alpha) / (sqrt(2 pi) x (1 - x)))
            - alpha K(eps, x) / (eps (1 - eps))
            + [phi(a + b) - phi(a) - phi(b)]

where ``K`` is the Bernoulli Kullback-Leibler divergence and ``phi`` the
Stirling remainder of log-gamma.  This is algebraically identical to the
textbook ``x^(a-1) (1-x)^(b-1) / B(a, b)`` but avoids the cancellation
between huge log-gamma values when ``alpha`` is large.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .numkit import LOG_SQRT_2PI, stirling_remainder, stirling_remainder_terms


@dataclass(frozen=True)
class BetaParam:
    alpha: float
    eps: float

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise DomainError(f"alpha must be positive, got {self.alpha}")
        if not 0.0 < self.eps < 1.0:
            raise DomainError(f"eps must lie in (0, 1), got {self.eps}")

    @property
    def shapes(self) -> tuple[float, float]:
        return to_shape(self)


def to_shape(p: BetaParam) -> tuple[float, float]:
    """Shape pair ``(a, b)`` with mean ``a / (a + b) = eps``."""
    return p.alpha / (1.0 - p.eps), p.alpha / p.eps


def _check_unit(x, name="x"):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0.0)) or np.any(~(x < 1.0)):
        raise DomainError(f"{name} must lie in the open interval (0, 1)")
    return x


def bern_kl(eps, x):
    """KL divergence between Bernoulli(eps) and Bernoulli(x).

    Near the diagonal it is written with ``log1p`` of the relative
    differences, which keeps it accurate when ``x`` is close to ``eps``;
    elsewhere the direct logarithms are used, which keep ``x`` near 0 or 1
    resolved.  Broadcasts over array arguments.
    """
    eps = np.asarray(eps, dtype=float)
    x = np.asarray(x, dtype=float)
    d = x - eps
    with np.errstate(divide="ignore", invalid="ignore"):
        near = -eps * np.log1p(d / eps) - (1.0 - eps) * np.log1p(-d / (1.0 - eps))
        far = eps * (np.log(eps) - np.log(x)) + (1.0 - eps) * (np.log1p(-eps) - np.log1p(-x))
    close = (np.abs(d) <= 0.5 * eps) & (np.abs(d) <= 0.5 * (1.0 - eps))
    out = np.maximum(np.where(close, near, far), 0.0)
    return float(out) if out.ndim == 0 else out


def log_stirling_bracket(alpha, eps, order=None):
    """Log of the gamma-ratio correction factor of the kernel.

    ``order=None`` gives the exact value ``phi(a+b) - phi(a) - phi(b)``.
    An integer keeps only the Stirling terms of order up to ``alpha^-order``
    (order 0 gives exactly 0), so the truncation error is
    ``O(alpha^-(order+1))``.
    """
    alpha = np.asarray(alpha, dtype=float)
    eps = np.asarray(eps, dtype=float)
    a = alpha / (1.0 - eps)
    b = alpha / eps
    ab = alpha / (eps * (1.0 - eps))
    if order is None:
        out = stirling_remainder(ab) - stirling_remainder(a) - stirling_remainder(b)
    else:
        n_terms = (int(order) + 1) // 2
        out = (stirling_remainder_terms(ab, n_terms) - stirling_remainder_terms(a, n_terms)
               - stirling_remainder_terms(b, n_terms))
    return out


def kernel_log_pdf(alpha, eps, x):
    """Vectorised log-density of the (alpha, eps) kernel at ``x``.

    No argument checking; ``alpha``, ``eps`` and ``x`` broadcast together.
    """
    alpha = np.asarray(alpha, dtype=float)
    eps = np.asarray(eps, dtype=float)
    x = np.asarray(x, dtype=float)
    expo = alpha * bern_kl(eps, x) / (eps * (1.0 - eps))
    shape = np.broadcast(alpha, eps).shape
    corr = np.reshape(log_stirling_bracket(np.broadcast_to(alpha, shape).ravel(),
                                           np.broadcast_to(eps, shape).ravel()), shape)
    return (0.5 * np.log(alpha) - LOG_SQRT_2PI - np.log(x) - np.log1p(-x)
            - expo + corr)


def log_pdf(p: BetaParam, x):
    """Exact log-density of the kernel ``p`` at ``x`` in (0, 1)."""
    x = _check_unit(x)
    out = kernel_log_pdf(p.alpha, p.eps, x)
    return float(out) if out.ndim == 0 else out


def pdf(p: BetaParam, x):
    out = np.exp(log_pdf(p, x))
    return float(out) if np.ndim(out) == 0 else out


def laplace_pdf(p: BetaParam, x, stirling_order: int = 0):
    """Gaussian-type form of the kernel with a truncated gamma correction.

    sqrt(alpha) / (sqrt(2 pi) x (1-x)) * exp(-alpha K(eps, x) / (eps (1-eps)))
    times the correction factor kept to ``alpha^-stirling_order``.  The
    exponent is exact; only the correction factor is truncated.
    """
    a, b = to_shape(p)
    ab = p.alpha / (p.eps * (1.0 - p.eps))
    if min(a, b, ab) <= 1.0:
        raise DomainError("alpha too small: all shape arguments must exceed 1")
    if stirling_order < 0:
        raise DomainError("stirling_order must be nonnegative")
    x = _check_unit(x)
    expo = p.alpha * bern_kl(p.eps, x) / (p.eps * (1.0 - p.eps))
    corr = float(log_stirling_bracket(p.alpha, p.eps, stirling_order))
    out = np.exp(0.5 * math.log(p.alpha) - LOG_SQRT_2PI - np.log(x) - np.log1p(-x)
                 - expo + corr)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Taylor expansion of the exponent around eps = x

MAX_TAYLOR_ORDER = 10


@dataclass(frozen=True)
class ExponentSeries:
    """Expansion of K(eps, x) / (eps (1 - eps)) in u = (x - eps) / (x (1 - x)).

    ``raw[k]`` is the coefficient of u^k (``raw[2] == 1/2``).  In bracket
    form the exponent reads (u^2 / 2) [1 + u (c + sum_l higher[l-1] u^l)],
    so ``c = 2 raw[3]`` and ``higher[l-1] = 2 raw[3 + l]``.
    """
    x: float
    leading: float
    c: float
    higher: tuple = ()
    raw: tuple = field(default=(), repr=False)

    @property
    def order(self) -> int:
        return len(self.raw) - 1

    def bracket_poly(self, u, upto=None):
        """c + sum_{l >= 1} C_l u^l, keeping powers u^(3 + l) <= u^upto."""
        upto = self.order if upto is None else upto
        u = np.asarray(u, dtype=float)
        out = np.full_like(u, self.c)
        for l, cl in enumerate(self.higher, start=1):
            if 3 + l > upto:
                break
            out = out + cl * u ** l
        return out

    def exponent(self, u):
        """Truncated series sum_k raw[k] u^k."""
        u = np.asarray(u, dtype=float)
        return np.polynomial.polynomial.polyval(u, np.asarray(self.raw))


def _series_log1p(c, n):
    # log(1 + c u) = sum_{k>=1} (-1)^(k+1) c^k u^k / k
    k = np.arange(n + 1)
    out = np.zeros(n + 1)
    out[1:] = (-1.0) ** (k[1:] + 1) * c ** k[1:] / k[1:]
    return out


def _series_inv1p(c, n):
    # 1 / (1 + c u) = sum_k (-c)^k u^k
    return (-c) ** np.arange(n + 1)


def exponent_taylor(x: float, order: int) -> ExponentSeries:
    """Coefficients of the kernel exponent around ``eps = x`` up to u^order.

    With eps = x - u x (1-x) the exponent is

        log(1 - (1-x) u) / ((1-x)(1 + x u)) + log(1 + x u) / (x (1 - (1-x) u)),

    and its power series is assembled exactly from the series of log1p and
    of a geometric factor.
    """
    order = int(order)
    if not 3 <= order <= MAX_TAYLOR_ORDER:
        raise DomainError(f"order must be between 3 and {MAX_TAYLOR_ORDER}")
    if not 1e-4 <= x <= 1.0 - 1e-4:
        raise DomainError("x too close to 0 or 1 for a stable expansion")
    n = order
    t1 = np.convolve(_series_log1p(-(1.0 - x), n), _series_inv1p(x, n))[: n + 1] / (1.0 - x)
    t2 = np.convolve(_series_log1p(x, n), _series_inv1p(-(1.0 - x), n))[: n + 1] / x
    raw = t1 + t2
    raw[:2] = 0.0
    c = 2.0 * raw[3]
    higher = tuple(2.0 * raw[4:])
    return ExponentSeries(x=float(x), leading=1.0 / (2.0 * x * x * (1.0 - x) ** 2),
                          c=float(c), higher=higher, raw=tuple(raw))


def cubic_coefficient(x):
    """Closed form of the bracket cubic coefficient, (4/3)(1 - 2x)."""
    return 4.0 / 3.0 * (1.0 - 2.0 * np.asarray(x, dtype=float))


def local_expanded_pdf(p: BetaParam, x: float, k1: int, k2: int, c0: float = 1.0) -> float:
    """Polynomial-times-Gaussian form of the kernel near its mean.

    The cubic and higher part of the exponent (powers u^3 .. u^k1) is
    expanded as exp(y) ~ sum_{j <= k2} y^j / j!.  The gamma correction is
    kept exact.  Valid only inside the window
    ``alpha |x - eps|^3 <= c0 x^3 (1-x)^3``.
    """
    if k2 < 0 or k1 < max(3, 3 * k2):
        raise DomainError("need k2 >= 0 and k1 >= max(3, 3 k2)")
    if not 0.0 < x < 1.0:
        raise DomainError("x must lie in (0, 1)")
    s = x * (1.0 - x)
    lhs = p.alpha * abs(x - p.eps) ** 3
    rhs = c0 * s ** 3
    if lhs > rhs:
        raise DomainError(
            f"window violated: alpha |x - eps|^3 = {lhs:.4g} > c0 x^3 (1-x)^3 = {rhs:.4g}")
    series = exponent_taylor(x, max(k1, 3))
    u = (x - p.eps) / s
    y = -0.5 * p.alpha * u ** 3 * float(series.bracket_poly(u, upto=k1))
    poly = sum(y ** j / math.factorial(j) for j in range(k2 + 1))
    corr = float(log_stirling_bracket(p.alpha, p.eps))
    return (math.sqrt(p.alpha) / (math.sqrt(2.0 * math.pi) * s)
            * math.exp(-0.5 * p.alpha * u * u + corr) * poly)
