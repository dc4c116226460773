"""Discrete and continuous Beta mixtures and distances between densities."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import AccuracyError, ContractError, DomainError
from .kernel import _check_unit, kernel_log_pdf
from .numkit import gauss_legendre_panels, integrate

KL_INFINITE = math.inf
_MIX_CELLS = 1 << 20   # kernel evaluations per block in mix_log_pdf


@dataclass(frozen=True)
class DiscreteMixture:
    """Mixture sum_j w_j g_{alpha, eps_j} with a shared scale ``alpha``."""
    alpha: float
    weights: np.ndarray
    eps: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        e = np.atleast_1d(np.asarray(self.eps, dtype=float))
        if w.shape != e.shape or w.ndim != 1 or len(w) == 0:
            raise ContractError("weights and eps must be equally long and nonempty")
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise DomainError("alpha must be positive")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise DomainError("weights must be positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise DomainError(f"weights must sum to 1 (sum = {w.sum():.17g})")
        if np.any(~((e > 0) & (e < 1))):
            raise DomainError("atom means must lie in (0, 1)")
        w.setflags(write=False)
        e.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "eps", e)

    @classmethod
    def from_atoms(cls, alpha, atoms: Sequence[tuple[float, float]], normalize=False):
        w = np.array([a[0] for a in atoms], dtype=float)
        e = np.array([a[1] for a in atoms], dtype=float)
        if normalize:
            w = w / w.sum()
        return cls(float(alpha), w, e)

    @property
    def k(self) -> int:
        return len(self.weights)

    @property
    def atoms(self):
        return list(zip(self.weights.tolist(), self.eps.tolist()))

    def __call__(self, x):
        return mix_pdf(self, x)

    def logpdf(self, x):
        return mix_log_pdf(self, _check_unit(x))

    def to_text(self) -> str:
        lines = [f"{self.alpha:.17g}", str(self.k)]
        lines += [f"{w:.17g} {e:.17g}" for w, e in zip(self.weights, self.eps)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "DiscreteMixture":
        rows = [ln.split() for ln in text.strip().splitlines() if ln.strip()]
        alpha = float(rows[0][0])
        k = int(rows[1][0])
        if len(rows) != k + 2:
            raise ContractError(f"expected {k} atom lines, found {len(rows) - 2}")
        w = np.array([float(r[0]) for r in rows[2:]])
        e = np.array([float(r[1]) for r in rows[2:]])
        return cls(alpha, w, e)


@dataclass(frozen=True)
class TargetDensity:
    """A density on [0, 1] with derivatives, smoothness metadata and a sampler.

    ``derivs[j - 1]`` is the j-th derivative; ``breakpoints`` lists interior
    points where the density is not smooth (used as quadrature breakpoints).
    """
    name: str
    pdf: Callable
    derivs: tuple = ()
    beta: float = 1.0
    L: float = 1.0
    k0: int = 0
    k1: int = 0
    sampler: Callable | None = None
    cdf: Callable | None = None
    breakpoints: tuple = ()

    def __call__(self, x):
        return self.pdf(np.asarray(x, dtype=float))

    @property
    def order(self) -> int:
        return len(self.derivs)

    def deriv(self, j: int) -> Callable:
        if j == 0:
            return self.pdf
        if not 1 <= j <= self.order:
            raise DomainError(f"{self.name}: derivative {j} not available (order {self.order})")
        return self.derivs[j - 1]

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.sampler is None:
            raise ContractError(f"{self.name} has no sampler")
        return self.sampler(rng, size)

    def check(self, offset: float = 1e-6, tol: float = 1e-8) -> dict:
        """Numerical checks of nonnegativity, normalization and the boundary
        derivative conditions f^(k0)(0) > 0 and (-1)^k1 f^(k1)(1) > 0."""
        grid = chebyshev_grid(1025)
        mass, _ = integrate(self.pdf, 0.0, 1.0, tol=1e-12, points=self.breakpoints)
        d0 = self.deriv(self.k0)(np.array([offset]))[0] if self.k0 <= self.order else np.nan
        d1 = self.deriv(self.k1)(np.array([1.0 - offset]))[0] if self.k1 <= self.order else np.nan
        return {
            "nonnegative": bool(np.all(self.pdf(grid) >= 0)),
            "mass": mass,
            "normalized": abs(mass - 1.0) <= tol,
            "left": d0,
            "right": d1,
            "boundary_ok": bool(d0 > 0 and (-1) ** self.k1 * d1 > 0),
        }


def _as_callable(f):
    if isinstance(f, (TargetDensity, DiscreteMixture)):
        return f
    if callable(f):
        return lambda x: np.asarray(f(np.asarray(x, dtype=float)), dtype=float)
    raise ContractError("density must be callable")


def mix_log_pdf(m: DiscreteMixture, x):
    """log of the mixture density, stabilised with log-sum-exp."""
    x = np.asarray(x, dtype=float)
    flat = x.reshape(-1, 1)
    logw = np.log(m.weights)[None, :]
    out = np.empty(len(flat))
    step = max(1, _MIX_CELLS // m.k)
    for i in range(0, len(flat), step):
        lk = kernel_log_pdf(m.alpha, m.eps[None, :], flat[i:i + step])
        out[i:i + step] = logsumexp(lk + logw, axis=1)
    out = out.reshape(x.shape)
    return float(out) if out.ndim == 0 else out


def mix_pdf(m: DiscreteMixture, x):
    """Mixture density at ``x`` in (0, 1)."""
    x = _check_unit(x)
    out = np.exp(mix_log_pdf(m, x))
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# Continuous mixtures

# Panel edges around the kernel peak in units of its width x(1-x)/sqrt(alpha),
# plus a fixed mesh graded towards both ends for small alpha.
_PEAK_STEPS = np.array([0.5, 1, 2, 3, 4, 6, 8, 11, 15, 20, 28, 40])
_FIXED_EDGES = np.array([1e-6, 1e-4, 1e-3, 0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5,
                         0.6, 0.7, 0.8, 0.9, 0.95, 0.99, 0.999, 1 - 1e-4, 1 - 1e-6])
_NODES_PER_PANEL = 16
_BLOCK = 256


def mixing_rule(alpha: float, x, breakpoints=()):
    """Quadrature nodes and weights in the mixing variable for each ``x``.

    Returns arrays of shape (len(x), n) such that
    sum_i w[k, i] h(eps[k, i]) approximates the integral of h over (0, 1)
    for integrands peaked like the kernel at x[k].  Zero-width panels get
    zero weight and a harmless node.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    width = x * (1.0 - x) / math.sqrt(alpha)
    steps = np.concatenate([-_PEAK_STEPS[::-1], [0.0], _PEAK_STEPS])
    peak = x[:, None] + width[:, None] * steps[None, :]
    fixed = np.broadcast_to(np.concatenate([_FIXED_EDGES, np.asarray(breakpoints, float)]),
                            (len(x), len(_FIXED_EDGES) + len(breakpoints)))
    edges = np.concatenate([np.zeros((len(x), 1)), np.clip(peak, 0.0, 1.0), fixed,
                            np.ones((len(x), 1))], axis=1)
    edges.sort(axis=1)
    t, w = np.polynomial.legendre.leggauss(_NODES_PER_PANEL)
    half = 0.5 * np.diff(edges, axis=1)
    mid = 0.5 * (edges[:, 1:] + edges[:, :-1])
    nodes = mid[:, :, None] + half[:, :, None] * t[None, None, :]
    weights = half[:, :, None] * w[None, None, :]
    nodes = nodes.reshape(len(x), -1)
    weights = weights.reshape(len(x), -1)
    bad = (weights <= 0) | (nodes <= 0) | (nodes >= 1)
    nodes = np.where(bad, 0.5, nodes)
    weights = np.where(bad, 0.0, weights)
    return nodes, weights


def cont_mix_pdf(alpha: float, f, x, method: str = "rule", tol: float = 1e-11):
    """Continuous mixture  g_{alpha,f}(x) = int_0^1 f(eps) g_{alpha,eps}(x) d eps.

    ``method="rule"`` (default) uses a composite Gauss-Legendre rule laid out
    around the kernel peak and evaluates all ``x`` at once;
    ``method="adaptive"`` calls :func:`integrate` per point.
    """
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    scalar = np.ndim(x) == 0
    x = _check_unit(np.atleast_1d(x))
    f = _as_callable(f)
    bps = tuple(getattr(f, "breakpoints", ()))
    out = np.empty(x.shape)
    # Points right of 1/2 are handled through the reflection
    # g_{alpha,f}(x) = int f(1 - e) g_{alpha,e}(1 - x) de, which keeps the
    # kernel resolved in floating point near x = 1.
    right = x > 0.5
    xr = np.where(right, 1.0 - x, x)
    mirrored = lambda e: f(1.0 - e)
    bps_m = tuple(1.0 - b for b in bps)
    if method == "adaptive":
        for i, xi in enumerate(xr):
            fi, bi = (mirrored, bps_m) if right[i] else (f, bps)
            width = xi * (1.0 - xi) / math.sqrt(alpha)
            steps = np.array([-256.0, -64.0, -16.0, -4.0, -1.0, 0.0, 1.0, 4.0, 16.0, 64.0, 256.0])
            val, _ = integrate(
                lambda e: fi(e) * np.exp(kernel_log_pdf(alpha, e, xi)), 0.0, 1.0,
                tol=tol, points=tuple(xi + width * steps) + bi, abs_floor=0.0)
            out[i] = val
    elif method == "rule":
        for side, fs, bs in ((~right, f, bps), (right, mirrored, bps_m)):
            idx = np.flatnonzero(side)
            for start in range(0, len(idx), _BLOCK):
                sel = idx[start:start + _BLOCK]
                xb = xr[sel]
                e, w = mixing_rule(alpha, xb, bs)
                vals = fs(e.ravel()).reshape(e.shape) * np.exp(kernel_log_pdf(alpha, e, xb[:, None]))
                out[sel] = np.sum(w * vals, axis=1)
    else:
        raise ContractError(f"unknown method {method!r}")
    if np.any(~np.isfinite(out)):
        raise AccuracyError("continuous mixture evaluation produced non-finite values")
    out = np.maximum(out, 0.0)
    return float(out[0]) if scalar else out


def chebyshev_grid(n: int = 4097) -> np.ndarray:
    """Chebyshev points of the first kind mapped to (0, 1); endpoints excluded."""
    k = np.arange(n)
    return np.sort(0.5 * (1.0 - np.cos(math.pi * (k + 0.5) / n)))


# ---------------------------------------------------------------------------
# Distances and divergences

# boundary layers of width alpha^-t0 are invisible to a coarse first panel
_EDGE_POINTS = tuple(10.0 ** -np.arange(15, 0, -1)) + tuple(1.0 - 10.0 ** -np.arange(1, 13))


def _pair(f, g):
    pts = set(getattr(f, "breakpoints", ())) | set(getattr(g, "breakpoints", ())) | set(_EDGE_POINTS)
    return _as_callable(f), _as_callable(g), tuple(sorted(p for p in pts if 0.0 < p < 1.0))


def l1(f, g, tol: float = 1e-10) -> float:
    """L1 distance  int |f - g|."""
    f, g, bps = _pair(f, g)
    val, _ = integrate(lambda x: np.abs(f(x) - g(x)), 0.0, 1.0, tol=tol, points=bps)
    return float(min(max(val, 0.0), 2.0))


def hellinger(f, g, tol: float = 1e-10) -> float:
    """Hellinger distance  (int (sqrt f - sqrt g)^2)^(1/2), in [0, sqrt 2]."""
    f, g, bps = _pair(f, g)
    val, _ = integrate(lambda x: (np.sqrt(f(x)) - np.sqrt(g(x))) ** 2, 0.0, 1.0,
                       tol=tol, points=bps)
    return float(min(math.sqrt(max(val, 0.0)), math.sqrt(2.0)))


class _SupportViolation(Exception):
    pass


def _logpdf(d):
    """log-density of ``d``: its own ``logpdf`` when it has one."""
    lp = getattr(d, "logpdf", None)
    if lp is not None:
        return lp

    def log_d(x):
        with np.errstate(divide="ignore"):
            return np.log(d(x))
    return log_d


def _log_ratio_integrand(f, g, kernel, floor):
    # kernel(fx, log r) with r = g/f, evaluated only where f > floor; log r
    # comes from log-densities so that g underflowing to 0 stays finite
    log_g = _logpdf(g)

    def h(x):
        fx = f(x)
        pos = fx > floor
        out = np.zeros_like(fx)
        if not np.any(pos):
            return out
        lg = log_g(x[pos])
        if np.any(~np.isfinite(lg)):
            raise _SupportViolation
        out[pos] = kernel(fx[pos], lg - np.log(fx[pos]))
        return out
    return h


def kl(f, g, tol: float = 1e-8, floor: float = 1e-300) -> float:
    """Kullback-Leibler divergence  int f log(f / g).

    For two densities  int f log(f/g) = int f (r - 1 - log r)  with r = g/f,
    because int f (r - 1) = int g - int f = 0.  The second form has a
    nonnegative integrand and no cancellation, so tiny divergences keep
    their relative accuracy.  A support violation (g = 0 where f > 0)
    returns ``KL_INFINITE``.
    """
    f, g, bps = _pair(f, g)
    h = _log_ratio_integrand(f, g, lambda fx, lr: fx * (np.expm1(lr) - lr), floor)
    return _relative_integral(h, bps, tol)


def v_p(f, g, p: float = 2.0, tol: float = 1e-8, floor: float = 1e-300) -> float:
    """V_p(f, g) = int f |log(f / g)|^p for p > 1."""
    if not p > 1:
        raise DomainError("v_p requires p > 1")
    f, g, bps = _pair(f, g)
    h = _log_ratio_integrand(f, g, lambda fx, lr: fx * np.abs(lr) ** p, floor)
    return _relative_integral(h, bps, tol)


def _relative_integral(h, bps, tol):
    try:
        val, _ = integrate(h, 0.0, 1.0, tol=tol, points=bps, abs_floor=0.0)
    except _SupportViolation:
        return KL_INFINITE
    except AccuracyError as exc:
        if exc.estimate is not None and math.isinf(exc.estimate):
            return KL_INFINITE
        raise
    return float(max(val, 0.0))


def sup_dist(f, g, grid=None) -> float:
    """max |f - g| over ``grid`` (default: 4097 Chebyshev points)."""
    f, g = _as_callable(f), _as_callable(g)
    grid = chebyshev_grid() if grid is None else np.asarray(grid, dtype=float)
    return float(np.max(np.abs(f(grid) - g(grid))))


def in_kl_ball(f0, f, tau: float, p: float = 2.0) -> bool:
    """Membership of f in {KL(f0, f) <= tau^2, V_p(f0, f) <= tau^p}."""
    if tau < 0:
        raise DomainError("tau must be nonnegative")
    if p < 2:
        raise DomainError("p must be at least 2")
    k = kl(f0, f)
    if not k <= tau * tau:
        return False
    return v_p(f0, f, p) <= tau ** p
