"""Continuous mixtures as approximations of smooth densities.

The uniform mixture g_alpha(x) = int_0^1 g_{alpha,eps}(x) d eps differs from 1
by about I(x) / alpha.  ``uniform_defect`` measures I(x) = alpha (g_alpha - 1)
numerically; ``correct_once`` and ``build_f1`` shift the mixing density so
that the continuous mixture matches the target to higher order in 1/alpha;
``approx_rate_report`` measures the resulting error rates.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as cheb

from .errors import DomainError
from .kernel import cubic_coefficient
from .mixtures import (TargetDensity, chebyshev_grid, cont_mix_pdf, kl, sup_dist,
                       v_p)
from .numkit import integrate, normal_moment

_UNIFORM = TargetDensity(name="uniform", pdf=lambda x: np.ones_like(np.asarray(x, float)))
_DEFECT_NODES = 48
_SPECTRAL_NODES = 129


def uniform_defect(alpha: float, grid) -> np.ndarray:
    """Rows ``(x, alpha * (g_alpha(x) - 1))`` for each x in ``grid``."""
    grid = np.asarray(grid, dtype=float)
    g = cont_mix_pdf(alpha, _UNIFORM, grid)
    return np.column_stack([grid, alpha * (g - 1.0)])


class _ChebInterp:
    """Chebyshev interpolant on [0, 1] through first-kind points."""

    def __init__(self, fn, n):
        k = np.arange(n)
        t = np.cos(math.pi * (k + 0.5) / n)
        self.coef = cheb.chebfit(t, fn(0.5 * (1.0 - t)), n - 1)

    def __call__(self, x):
        return cheb.chebval(1.0 - 2.0 * np.asarray(x, dtype=float), self.coef)

    def deriv(self, m=1):
        out = object.__new__(_ChebInterp)
        # d/dx = -2 d/dt
        out.coef = cheb.chebder(self.coef, m) * (-2.0) ** m
        return out


class DefectTable:
    """Interpolated I(x) = alpha (g_alpha(x) - 1) for one alpha.

    I is a smooth bounded function on [0, 1]; a Chebyshev interpolant
    through a few dozen points reproduces direct quadrature to ~1e-11.
    """

    def __init__(self, alpha: float, n: int = _DEFECT_NODES):
        self.alpha = float(alpha)
        self._interp = _ChebInterp(lambda x: uniform_defect(alpha, x)[:, 1], n)

    def __call__(self, x):
        return self._interp(x)


@dataclass
class CorrectedDensity:
    """h(x) = [f(x) - f(x) I(x)/alpha - s f'(x) C(x) mu4 k/alpha
                    - s^2 f''(x) mu2 / (2 alpha)] / c,     s = x(1-x),

    with ``k = drift_scale``.  ``base`` supplies f and its first two
    derivatives; ``rhs`` is the density being matched (for a first step it
    is f itself).  Values are clipped at ``clip`` when ``clipped`` is set.
    """
    rhs: object
    base: object
    defect: DefectTable
    alpha: float
    drift_scale: float = 0.5
    c: float = 1.0
    clip: float | None = None
    breakpoints: tuple = ()

    def raw(self, x):
        x = np.asarray(x, dtype=float)
        f, d1, d2 = (self.base.deriv(j)(x) for j in range(3))
        s = x * (1.0 - x)
        mu2, mu4 = normal_moment(2), normal_moment(4)
        corr = (self.base(x) * self.defect(x)
                + self.drift_scale * mu4 * s * d1 * cubic_coefficient(x)
                + 0.5 * mu2 * s * s * d2) / self.alpha
        return self.rhs(x) - corr

    def __call__(self, x):
        h = self.raw(x)
        if self.clip is not None:
            h = np.maximum(h, self.clip)
        return h / self.c


class _Spectral:
    """Chebyshev surrogate of a density exposing ``deriv(j)``."""

    def __init__(self, fn, n=_SPECTRAL_NODES):
        self._f = fn
        self._interp = _ChebInterp(fn, n)

    def __call__(self, x):
        return self._f(np.asarray(x, dtype=float))

    def deriv(self, j):
        if j == 0:
            return self
        return self._interp.deriv(j)


@dataclass
class CorrectionLedger:
    """Record of the iterative construction of f1."""
    target: TargetDensity
    alpha: float
    steps: list = field(default_factory=list)   # (index, density, c_j, clipped)
    final: object = None
    valid: bool = True

    @property
    def normalizers(self):
        return [c for _, _, c, _ in self.steps]

    @property
    def clipped(self):
        return any(cl for *_, cl in self.steps)


class CorrectionError(DomainError):
    """The corrected density is not positive: alpha is too small."""

    def __init__(self, message, x=None):
        super().__init__(message)
        self.x = x


def _positivity_mesh():
    return np.concatenate([np.logspace(-10, -3, 15), chebyshev_grid(1025),
                           1.0 - np.logspace(-10, -3, 15)])


def _finish(h: CorrectedDensity, allow_clip: bool):
    mesh = _positivity_mesh()
    vals = h.raw(mesh)
    clipped = False
    if np.any(vals <= 0):
        bad = float(mesh[np.argmin(vals)])
        if not allow_clip:
            raise CorrectionError(
                f"alpha={h.alpha:g} too small for correction: h <= 0 at x={bad:.6g}", x=bad)
        h.clip = 1e-12
        clipped = True
    c, _ = integrate(lambda x: h.raw(x) if h.clip is None else np.maximum(h.raw(x), h.clip),
                     0.0, 1.0, tol=1e-13, points=h.breakpoints)
    h.c = c
    return h, clipped


def correct_once(f: TargetDensity, alpha: float, drift_scale: float = 0.5,
                 defect: DefectTable | None = None):
    """One correction step; returns ``(h1, c1)`` with ``h1`` normalized.

    Needs f, f' and f''.  Raises :class:`CorrectionError` naming the
    offending x if h1 is not positive on the check mesh.
    """
    if f.order < 2:
        raise DomainError(f"{f.name}: correction needs two derivatives")
    defect = defect or DefectTable(alpha)
    h = CorrectedDensity(rhs=f, base=f, defect=defect, alpha=alpha,
                         drift_scale=drift_scale, breakpoints=tuple(f.breakpoints))
    h, _ = _finish(h, allow_clip=False)
    return h, h.c


def correction_steps(beta: float) -> int:
    """Largest integer strictly smaller than beta / 2, or 0 when beta <= 2."""
    if beta <= 2:
        return 0
    half = beta / 2.0
    r = math.floor(half)
    return int(r - 1 if r == half else r)


def build_f1(f: TargetDensity, alpha: float, steps: int | None = None,
             drift_scale: float = 0.5) -> CorrectionLedger:
    """Iteratively corrected mixing density.

    ``steps`` defaults to the number implied by the declared smoothness
    ``f.beta``; zero steps return f unchanged.  Step j solves
    h_j = f - L(h_{j-1}) where L is the first-order defect operator, using
    spectral derivatives of h_{j-1} from the second step on.  A step whose
    density is not positive is clipped at 1e-12 and flagged.
    """
    n_steps = correction_steps(f.beta) if steps is None else int(steps)
    ledger = CorrectionLedger(target=f, alpha=alpha)
    if n_steps == 0:
        ledger.final = f
        return ledger
    if f.order < 2:
        raise DomainError(f"{f.name}: correction needs two derivatives")
    defect = DefectTable(alpha)
    base = f
    current = f
    for j in range(1, n_steps + 1):
        h = CorrectedDensity(rhs=f, base=base, defect=defect, alpha=alpha,
                             drift_scale=drift_scale, breakpoints=tuple(f.breakpoints))
        h, clipped = _finish(h, allow_clip=True)
        if abs(h.c - 1.0) > 0.5:
            ledger.valid = False
        ledger.steps.append((j, h, h.c, clipped))
        current = h
        base = _Spectral(current)
    ledger.final = current
    return ledger


# ---------------------------------------------------------------------------
# Rate measurement

def fit_slope(x, y):
    """Least-squares slope of log y on log x with its standard error."""
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    n = len(lx)
    if n < 2:
        return math.nan, math.nan
    A = np.column_stack([lx, np.ones(n)])
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    if n > 2:
        resid = ly - A @ coef
        s2 = resid @ resid / (n - 2)
        se = math.sqrt(s2 / np.sum((lx - lx.mean()) ** 2))
    else:
        se = 0.0
    return float(coef[0]), se


@dataclass
class RateReport:
    rows: list            # (alpha, sup_err, kl, vp)
    slopes: dict          # metric -> (slope, stderr)
    steps: int = 0
    runtime: float = 0.0

    def to_csv(self) -> str:
        lines = ["alpha,sup_err,kl,vp"]
        lines += [",".join(f"{v:.17g}" for v in row) for row in self.rows]
        parts = [f"{k}_slope={s:.6g};{k}_se={e:.3g}" for k, (s, e) in self.slopes.items()]
        lines.append("# " + ";".join(parts))
        return "\n".join(lines) + "\n"


def approx_error(f: TargetDensity, alpha: float, steps: int = 0, p: float = 2.0,
                 grid=None, drift_scale: float = 0.5):
    """(sup error, KL, V_p) of the continuous mixture built from f."""
    mixing = f if steps == 0 else build_f1(f, alpha, steps=steps, drift_scale=drift_scale).final
    bps = tuple(f.breakpoints)
    g = _MixtureCurve(alpha, mixing, bps)
    sup = sup_dist(f, g, grid)
    return sup, kl(f, g, tol=1e-6), v_p(f, g, p, tol=1e-6)


class _MixtureCurve:
    def __init__(self, alpha, mixing, breakpoints):
        self.alpha = alpha
        self.mixing = mixing
        self.breakpoints = breakpoints

    def __call__(self, x):
        return cont_mix_pdf(self.alpha, self.mixing, x)


def approx_rate_report(f: TargetDensity, alpha_grid, steps: int | None = None,
                       p: float = 2.0, drift_scale: float = 0.5) -> RateReport:
    """Sup-norm, KL and V_p errors of g_{alpha, f1} against f over an alpha grid.

    ``steps`` is the number of correction steps (default: implied by f.beta).
    """
    alphas = np.asarray(alpha_grid, dtype=float)
    if len(alphas) < 2 or np.any(np.diff(alphas) <= 0):
        raise DomainError("alpha grid must be increasing with at least two entries")
    n_steps = correction_steps(f.beta) if steps is None else int(steps)
    t0 = time.perf_counter()
    rows = []
    for a in alphas:
        sup, k, v = approx_error(f, a, n_steps, p, drift_scale=drift_scale)
        rows.append((float(a), sup, k, v))
    arr = np.array(rows)
    slopes = {name: fit_slope(arr[:, 0], arr[:, i + 1])
              for i, name in enumerate(("sup", "kl", "vp"))}
    return RateReport(rows=rows, slopes=slopes, steps=n_steps,
                      runtime=time.perf_counter() - t0)
