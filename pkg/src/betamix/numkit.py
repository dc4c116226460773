"""Numerical substrate: log-gamma, adaptive quadrature, normal moments and
Gauss rules built from moment sequences.

Everything here is a pure function of its inputs and works on numpy arrays
where that makes sense.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import AccuracyError, DegeneracyError, DomainError

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

# Lanczos approximation, g = 6.0246800407767296, 13 terms (Boost/Cephes
# "lanczos13m53"), as a rational function with coefficients highest degree
# first.  Gamma(z) = ((z + g - 1/2) / e)^(z - 1/2) * S(z).
_LANCZOS_G = 6.024680040776729583740234375
_LANCZOS_NUM = np.array([
    0.006061842346248906525783753964555936883222,
    0.5098416655656676188125178644804694509993,
    19.51992788247617482847860966235652136208,
    449.9445569063168119446858607650988409623,
    6955.999602515376140356310115515198987526,
    75999.29304014542649875303443598909137092,
    601859.6171681098786670226533699352302507,
    3481712.15498064590882071018964774556468,
    14605578.08768506808414169982791359218571,
    43338889.32467613834773723740590533316085,
    86363131.28813859145546927288977868422342,
    103794043.1163445451906271053616070238554,
    56906521.91347156388090791033559122686859,
])
_LANCZOS_DEN = np.array([
    1.0, 66.0, 1925.0, 32670.0, 357423.0, 2637558.0, 13339535.0,
    45995730.0, 105258076.0, 150917976.0, 120543840.0, 39916800.0, 0.0,
])

# Bernoulli numbers B_2, B_4, ..., B_16 for the Stirling remainder series.
_BERNOULLI = np.array([
    1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0, 5.0 / 66.0,
    -691.0 / 2730.0, 7.0 / 6.0, -3617.0 / 510.0,
])
_STIRLING_COEF = np.array(
    [b / ((2 * m) * (2 * m - 1)) for m, b in enumerate(_BERNOULLI, start=1)]
)
_STIRLING_SWITCH = 15.0


def _lanczos_sum(z):
    # Evaluate in 1/z for large z so the rational function stays well scaled.
    z = np.asarray(z, dtype=float)
    small = z <= 1.0
    out = np.empty_like(z)
    if np.any(small):
        zs = z[small]
        out[small] = np.polyval(_LANCZOS_NUM, zs) / np.polyval(_LANCZOS_DEN, zs)
    if np.any(~small):
        zi = 1.0 / z[~small]
        out[~small] = (np.polyval(_LANCZOS_NUM[::-1], zi)
                       / np.polyval(_LANCZOS_DEN[::-1], zi))
    return out


def _stirling_series(y):
    inv = 1.0 / y
    inv2 = inv * inv
    acc = np.zeros_like(y)
    for c in _STIRLING_COEF[::-1]:
        acc = acc * inv2 + c
    return acc * inv


def _check_positive(x, name="x"):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)) or np.any(x <= 0.0):
        raise DomainError(f"{name} must be finite and positive")
    return x


def log_gamma(x):
    """Natural log of the gamma function for positive ``x``.

    Lanczos rational approximation on [0.5, 15), the Stirling series above
    that, and the reflection formula below 0.5.  Accepts scalars or arrays.
    """
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(_check_positive(x)).astype(float)
    out = np.empty_like(x)

    big = x >= _STIRLING_SWITCH
    if np.any(big):
        y = x[big]
        out[big] = (y - 0.5) * np.log(y) - y + LOG_SQRT_2PI + _stirling_series(y)

    mid = (x >= 0.5) & ~big
    if np.any(mid):
        z = x[mid]
        zgh = z + _LANCZOS_G - 0.5
        out[mid] = (z - 0.5) * (np.log(zgh) - 1.0) + np.log(_lanczos_sum(z))

    low = x < 0.5
    if np.any(low):
        z = x[low]
        # Gamma(z) Gamma(1 - z) = pi / sin(pi z), and 1 - z lies in (0.5, 1).
        w = 1.0 - z
        wgh = w + _LANCZOS_G - 0.5
        lg_w = (w - 0.5) * (np.log(wgh) - 1.0) + np.log(_lanczos_sum(w))
        out[low] = math.log(math.pi) - np.log(np.sin(math.pi * z)) - lg_w

    return float(out[0]) if scalar else out


def stirling_remainder(y):
    """``log_gamma(y) - [(y - 1/2) log y - y + log(2 pi)/2]``.

    Evaluated from the asymptotic series for large ``y`` so that no
    cancellation occurs there; this is the quantity that carries the whole
    gamma-function correction in ratios such as Gamma(a+b)/(Gamma(a)Gamma(b)).
    """
    scalar = np.ndim(y) == 0
    y = np.atleast_1d(_check_positive(y, "y")).astype(float)
    out = np.empty_like(y)
    big = y >= _STIRLING_SWITCH
    if np.any(big):
        out[big] = _stirling_series(y[big])
    if np.any(~big):
        z = y[~big]
        out[~big] = log_gamma(z) - ((z - 0.5) * np.log(z) - z + LOG_SQRT_2PI)
    return float(out[0]) if scalar else out


def stirling_remainder_terms(y, n_terms):
    """Partial sums of the Stirling remainder series: the first ``n_terms``
    terms B_2m / (2m (2m-1) y^(2m-1)).  Zero terms gives zero."""
    y = np.asarray(y, dtype=float)
    acc = np.zeros_like(y)
    for m in range(min(n_terms, len(_STIRLING_COEF))):
        acc = acc + _STIRLING_COEF[m] * y ** (-(2 * m + 1))
    return acc


# ---------------------------------------------------------------------------
# Adaptive Gauss-Kronrod quadrature

_XGK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0,
])
_WGK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
])
# Full 15-point node set on [-1, 1] and the matching weight vectors.
_K15_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_K15_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
_G7_WEIGHTS = np.zeros(15)
for _i, _w in zip((1, 3, 5), _WG[:3]):
    _G7_WEIGHTS[_i] = _w
    _G7_WEIGHTS[14 - _i] = _w
_G7_WEIGHTS[7] = _WG[3]
_EPS = np.finfo(float).eps


def _gk15(f, a, b):
    """Kronrod estimate and QUADPACK-style error for many panels at once."""
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    x = mid[:, None] + half[:, None] * _K15_NODES[None, :]
    fx = np.asarray(f(x.ravel()), dtype=float).reshape(x.shape)
    if not np.all(np.isfinite(fx)):
        raise AccuracyError("integrand returned a non-finite value")
    kron = half * (fx @ _K15_WEIGHTS)
    gauss = half * (fx @ _G7_WEIGHTS)
    mean = kron / np.where(half != 0.0, 2.0 * half, 1.0)
    resasc = np.abs(half) * (np.abs(fx - mean[:, None]) @ _K15_WEIGHTS)
    resabs = np.abs(half) * (np.abs(fx) @ _K15_WEIGHTS)
    err = np.abs(kron - gauss)
    scaled = np.where(resasc > 0.0,
                      resasc * np.minimum(1.0, (200.0 * err / np.where(resasc > 0, resasc, 1.0)) ** 1.5),
                      err)
    floor = 50.0 * _EPS * resabs
    return kron, np.maximum(scaled, floor)


def _adaptive(f, edges, tol, max_panels, abs_floor=1.0):
    a = np.asarray(edges[:-1], dtype=float)
    b = np.asarray(edges[1:], dtype=float)
    val, err = _gk15(f, a, b)
    done_val = 0.0
    done_err = 0.0
    while True:
        total = done_val + val.sum()
        target = tol * max(abs_floor, abs(total))
        total_err = done_err + err.sum()
        if total_err <= target:
            return total, total_err, True
        n = len(a)
        if n + len(a) > max_panels:
            return total, total_err, False
        share = (target - done_err) / n if target > done_err else 0.0
        split = err > max(share, 0.0)
        # Panels too narrow to bisect are frozen with their current error.
        narrow = (b - a) <= 1e3 * _EPS * np.maximum(np.abs(a), np.abs(b))
        freeze = ~split | narrow
        done_val += val[freeze].sum()
        done_err += err[freeze].sum()
        a, b = a[~freeze], b[~freeze]
        if len(a) == 0:
            total = done_val
            return total, done_err, done_err <= tol * max(abs_floor, abs(total))
        m = 0.5 * (a + b)
        a, b = np.concatenate([a, m]), np.concatenate([m, b])
        val, err = _gk15(f, a, b)


def integrate(f: Callable, a: float, b: float, tol: float = 1e-10,
              points=None, max_panels: int = 4000,
              abs_floor: float = 1.0) -> tuple[float, float]:
    """Integrate ``f`` over ``(a, b)``.

    ``f`` must accept a 1-d numpy array of abscissae.  Integrable endpoint
    singularities are allowed: nodes never touch the endpoints, and if plain
    adaptive bisection runs out of budget the integral is retried after the
    substitution x = a + (b - a) t^2 (3 - 2 t), which clusters nodes at both
    ends.  ``points`` are interior breakpoints (kinks, peaks).

    Returns ``(value, error_estimate)``; raises :class:`AccuracyError`
    carrying the best estimate if the tolerance is not met.
    """
    if not (np.isfinite(a) and np.isfinite(b)) or not a < b:
        raise DomainError("integration limits must be finite with a < b")
    inner = sorted(float(p) for p in (() if points is None else points) if a < p < b)
    edges = np.array([a, *inner, b], dtype=float)
    value, err, ok = _adaptive(f, edges, tol, max_panels, abs_floor)
    if ok:
        return float(value), float(err)

    best = (value, err)
    g = f
    for _ in range(2):
        g = _smoothstep_substitution(g, a, b)
        t_edges = _smoothstep_inverse(edges, a, b)
        value, err, ok = _adaptive(g, t_edges, tol, max_panels, abs_floor)
        if ok:
            return float(value), float(err)
        if err < best[1]:
            best = (value, err)
        a, b, edges = 0.0, 1.0, t_edges
    raise AccuracyError(
        f"quadrature did not converge (error estimate {best[1]:.3g})",
        estimate=float(best[0]), error=float(best[1]))


def _smoothstep_substitution(f, a, b):
    width = b - a

    def g(t):
        x = a + width * t * t * (3.0 - 2.0 * t)
        jac = (6.0 * width) * t * (1.0 - t)
        # nodes that round onto an endpoint carry vanishing weight
        inside = (x > a) & (x < b)
        out = np.zeros_like(x)
        if np.any(inside):
            out[inside] = f(x[inside]) * jac[inside]
        return out

    return g


def _smoothstep_inverse(x, a, b):
    # Solve s = t^2 (3 - 2t) on [0, 1]; the root in [0, 1] is
    # t = 1/2 - sin(asin(1 - 2s) / 3).
    s = np.clip((np.asarray(x, dtype=float) - a) / (b - a), 0.0, 1.0)
    return 0.5 - np.sin(np.arcsin(1.0 - 2.0 * s) / 3.0)


def gauss_legendre_panels(edges, n: int = 20):
    """Composite Gauss-Legendre nodes and weights over consecutive panels."""
    t, w = np.polynomial.legendre.leggauss(n)
    edges = np.asarray(edges, dtype=float)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    x = (mid[:, None] + half[:, None] * t[None, :]).ravel()
    wx = (half[:, None] * w[None, :]).ravel()
    return x, wx


# ---------------------------------------------------------------------------
# Normal moments

def normal_moment(j: int) -> float:
    """E[Z^j] for standard normal Z: zero for odd j, (j-1)!! for even j."""
    if j < 0 or int(j) != j:
        raise DomainError("moment order must be a nonnegative integer")
    if j % 2:
        return 0.0
    out = 1.0
    for k in range(j - 1, 0, -2):
        out *= k
    return out


def normal_abs_moment(beta: float) -> float:
    """E|Z|^beta = 2^(beta/2) Gamma((beta+1)/2) / sqrt(pi)."""
    if not beta > -1.0:
        raise DomainError("absolute moment needs beta > -1")
    return math.exp(0.5 * beta * math.log(2.0)
                    + log_gamma(0.5 * (beta + 1.0)) - 0.5 * math.log(math.pi))


# ---------------------------------------------------------------------------
# Gauss rules from moments

MAX_NODES = 12


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.shape != weights.shape or nodes.ndim != 1:
            raise DomainError("nodes and weights must be 1-d and equally long")
        if np.any(np.diff(nodes) <= 0):
            raise DomainError("nodes must be strictly increasing")
        if np.any(weights <= 0):
            raise DomainError("weights must be positive")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return len(self.nodes)

    def apply(self, f) -> float:
        return float(np.dot(self.weights, f(self.nodes)))

    def moments(self, count: int) -> np.ndarray:
        powers = self.nodes[None, :] ** np.arange(count)[:, None]
        return powers @ self.weights


def gauss_from_moments(m, n_nodes: int, rtol: float = 1e-13) -> QuadratureRule:
    """The ``n_nodes``-point Gauss rule of the measure with moments ``m``.

    ``m[l]`` is the l-th raw moment for l = 0 .. 2N-1 (extra entries are
    ignored).  The Hankel matrix is factored by a Cholesky recursion that
    only needs moments up to 2N-1; the recurrence coefficients form a Jacobi
    matrix whose eigen-decomposition gives the nodes, and the weights come
    from the first eigenvector components.  A pivot collapsing below
    ``rtol`` times its scale means the measure has fewer than N support
    points, and :class:`DegeneracyError` is raised.

    For well-conditioned results pass moments of a variable centred and
    scaled to the measure's support (e.g. mapped to [-1, 1]).
    """
    n = int(n_nodes)
    if n < 1:
        raise DomainError("need at least one node")
    if n > MAX_NODES:
        raise DomainError(f"at most {MAX_NODES} nodes are supported")
    m = np.asarray(m, dtype=float)
    if len(m) < 2 * n:
        raise DomainError(f"{2 * n} moments are needed for {n} nodes")
    if not m[0] > 0:
        raise DomainError("zeroth moment must be positive")

    # Hankel rows 0..n-1, columns 0..n.
    hank = np.array([[m[i + j] for j in range(n + 1)] for i in range(n)])
    r = np.zeros((n, n + 1))
    for i in range(n):
        piv = hank[i, i] - r[:i, i] @ r[:i, i]
        scale = hank[i, i] if hank[i, i] > 0 else m[0]
        if not piv > rtol * abs(scale):
            raise DegeneracyError(
                f"moment sequence supports fewer than {n} nodes "
                f"(pivot {i} collapsed); use at most {i} nodes")
        r[i, i] = math.sqrt(piv)
        for j in range(i + 1, n + 1):
            r[i, j] = (hank[i, j] - r[:i, i] @ r[:i, j]) / r[i, i]

    diag = np.empty(n)
    off = np.empty(max(n - 1, 0))
    for j in range(n):
        diag[j] = r[j, j + 1] / r[j, j] - (r[j - 1, j] / r[j - 1, j - 1] if j else 0.0)
    for j in range(n - 1):
        off[j] = r[j + 1, j + 1] / r[j, j]

    jac = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    nodes, vecs = np.linalg.eigh(jac)
    weights = m[0] * vecs[0, :] ** 2
    if np.any(weights <= 0) or np.any(np.diff(nodes) <= 0):
        raise DegeneracyError("Gauss rule has coincident nodes or null weights")
    return QuadratureRule(nodes, weights)
