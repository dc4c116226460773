"""Finite mixtures approximating continuous ones by per-cell moment matching.

The mixing interval is cut into a geometric grid that refines towards both
ends.  On each cell the restricted mixing density is replaced by its Gauss
rule, so the discrete mixture reproduces the cell's first 2N - 1 moments.
The mass below ``eps0`` and above ``1 - eps0`` becomes one atom each.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .approx_continuous import build_f1, fit_slope
from .errors import BudgetError, DegeneracyError, DomainError
from .mixtures import DiscreteMixture, TargetDensity, _as_callable, kl, v_p
from .numkit import MAX_NODES, gauss_from_moments, integrate

MAX_CELLS = 10 ** 6
MIN_CELL_MASS = 1e-15
_CELL_GL = 48


@dataclass(frozen=True)
class SupportGrid:
    """Cells covering [eps0, 1 - eps0], symmetric about 1/2.

    ``left`` holds the geometric breakpoints eps0 * ratio^j below 1/2.  The
    gap between the last of them and its mirror image is cut into equal
    cells no wider than the last geometric cell (``middle`` holds the
    interior cut points), and the right half mirrors the left.  ``J`` is
    the length of the full geometric sequence, which may run past 1/2.
    """
    alpha: float
    t0: float
    M: float
    eps0: float
    ratio: float
    J: int
    left: np.ndarray
    middle: np.ndarray

    @property
    def edges(self) -> np.ndarray:
        return np.concatenate([self.left, self.middle, 1.0 - self.left[::-1]])

    def cell_specs(self):
        """(lo, hi, mirrored) per cell; mirrored cells are stored by their
        left-half image [lo, hi] and cover [1 - hi, 1 - lo]."""
        specs = [(lo, hi, False) for lo, hi in zip(self.left[:-1], self.left[1:])]
        mid = np.concatenate([[self.left[-1]], self.middle, [1.0 - self.left[-1]]])
        specs += [(lo, hi, False) for lo, hi in zip(mid[:-1], mid[1:])]
        specs += [(lo, hi, True) for lo, hi, _ in reversed(specs[: len(self.left) - 1])]
        return specs

    @property
    def cells(self):
        return [((1.0 - hi, 1.0 - lo) if m else (lo, hi)) for lo, hi, m in self.cell_specs()]

    @property
    def n_cells(self) -> int:
        return 2 * (len(self.left) - 1) + len(self.middle) + 1


def grid_size(alpha: float, t0: float = 1.0, M: float = 1.0) -> int:
    """floor((t0 log a + 2 log log a) / log(1 + M sqrt(log a / a))) + 1."""
    la = math.log(alpha)
    return math.floor((t0 * la + 2.0 * math.log(la)) / math.log1p(M * math.sqrt(la / alpha))) + 1


def support_grid(alpha: float, t0: float = 1.0, M: float = 1.0) -> SupportGrid:
    if not alpha >= math.e:
        raise DomainError("support grid needs alpha >= e")
    if not (t0 > 0 and M > 0):
        raise DomainError("t0 and M must be positive")
    J = grid_size(alpha, t0, M)
    if J > MAX_CELLS:
        raise BudgetError(f"grid would have {J} cells (limit {MAX_CELLS})")
    eps0 = alpha ** (-t0)
    if eps0 >= 0.5:
        raise DomainError("alpha^-t0 must be below 1/2")
    ratio = 1.0 + M * math.sqrt(math.log(alpha) / alpha)
    n_left = min(J, math.floor(math.log(0.5 / eps0) / math.log(ratio)))
    left = eps0 * ratio ** np.arange(n_left + 1)
    left = left[left < 0.5]
    top = left[-1]
    width = top - left[-2] if len(left) > 1 else 1.0 - 2.0 * top
    pieces = max(1, math.ceil((1.0 - 2.0 * top) / width - 1e-9))
    middle = top + (1.0 - 2.0 * top) * np.arange(1, pieces) / pieces
    return SupportGrid(alpha=float(alpha), t0=float(t0), M=float(M), eps0=eps0,
                       ratio=ratio, J=J, left=left, middle=middle)


@dataclass
class CellRecord:
    lo: float
    hi: float
    mass: float
    moments: np.ndarray | None = None    # moments of the local variable in [-1, 1]
    rule: tuple | None = None            # (nodes, weights) in the local variable
    status: str = "ok"                   # ok | skipped | fallback

    @property
    def nodes(self) -> int:
        return 0 if self.rule is None else len(self.rule[0])


@dataclass
class Discretization:
    mixture: DiscreteMixture
    grid: SupportGrid
    cells: list = field(default_factory=list)
    tail_mass: tuple = (0.0, 0.0)

    @property
    def skipped(self):
        return [c for c in self.cells if c.status == "skipped"]

    def moment_errors(self):
        """Per cell, the largest mismatch between the rule's moments and the
        cell's moments, both normalized by the cell mass."""
        out = []
        for c in self.cells:
            if c.status != "ok":
                continue
            t, w = c.rule
            n = 2 * len(t)
            got = (t[None, :] ** np.arange(n)[:, None]) @ w
            out.append(float(np.max(np.abs(got - c.moments[:n]))))
        return out


def _cell_moments(f, lo, hi, count, breakpoints):
    """Mass and normalized moments of t = (2 eps - lo - hi) / (hi - lo) under f."""
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    inner = [b for b in breakpoints if lo < b < hi]
    edges = np.array([lo, *inner, hi])
    x, w = np.polynomial.legendre.leggauss(_CELL_GL)
    seg_mid = 0.5 * (edges[1:] + edges[:-1])
    seg_half = 0.5 * np.diff(edges)
    nodes = (seg_mid[:, None] + seg_half[:, None] * x[None, :]).ravel()
    wts = (seg_half[:, None] * w[None, :]).ravel() * f(nodes)
    mass = float(np.sum(wts))
    t = (nodes - mid) / half
    if mass <= 0:
        return mass, None
    mom = np.array([np.sum(wts * t ** l) for l in range(count)]) / mass
    return mass, mom


def discretize(alpha: float, f, grid: SupportGrid, nodes_per_cell: int = 6) -> Discretization:
    """Discrete mixing measure matching f's moments cell by cell.

    Each cell with mass above 1e-15 contributes the ``nodes_per_cell``-point
    Gauss rule of f restricted to it; a cell whose moment sequence supports
    fewer points falls back to one atom at its mean.  The mass of f on
    (0, eps0) and (1 - eps0, 1) goes to atoms at eps0 and 1 - eps0.  Cells
    right of 1/2 are computed on their mirror image with f(1 - eps), which
    keeps their local coordinates accurate near 1.
    """
    N = int(nodes_per_cell)
    if not 1 <= N <= MAX_NODES:
        raise DomainError(f"nodes_per_cell must lie in 1..{MAX_NODES}")
    f = _as_callable(f)
    bps = tuple(getattr(f, "breakpoints", ()))
    f_m = lambda e: f(1.0 - np.asarray(e, dtype=float))
    bps_m = tuple(1.0 - b for b in bps)
    eps0 = grid.eps0
    left, _ = integrate(f, 0.0, eps0, tol=1e-13, points=[b for b in bps if b < eps0])
    right, _ = integrate(f_m, 0.0, eps0, tol=1e-13, points=[b for b in bps_m if b < eps0])

    weights, atoms, records = [], [], []
    if left > 0:
        weights.append(left)
        atoms.append(eps0)
    for lo, hi, mirrored in grid.cell_specs():
        fc, bc = (f_m, bps_m) if mirrored else (f, bps)
        mass, mom = _cell_moments(fc, lo, hi, 2 * N, bc)
        span = (1.0 - hi, 1.0 - lo) if mirrored else (lo, hi)
        rec = CellRecord(lo=float(span[0]), hi=float(span[1]), mass=mass, moments=mom)
        records.append(rec)
        if mass < MIN_CELL_MASS:
            rec.status = "skipped"
            continue
        try:
            rule = gauss_from_moments(mom, N)
            t, w = rule.nodes, rule.weights
        except DegeneracyError:
            t, w = np.array([mom[1]]), np.array([1.0])
            rec.status = "fallback"
        rec.rule = (t, w)
        e = 0.5 * (lo + hi) + 0.5 * (hi - lo) * t
        weights.extend((w * mass).tolist())
        atoms.extend((1.0 - e if mirrored else e).tolist())
    if right > 0:
        weights.append(right)
        atoms.append(1.0 - eps0)

    w = np.array(weights)
    e = np.array(atoms)
    mixture = DiscreteMixture(float(alpha), w / w.sum(), e)
    return Discretization(mixture=mixture, grid=grid, cells=records, tail_mass=(left, right))


def floor_weights(m: DiscreteMixture, A: float = 8.0) -> tuple[DiscreteMixture, float]:
    """Raise weights at or below v = alpha^-A to v and renormalize.

    Returns the floored mixture and the renormalizing constant c: floored
    atoms get c v, the others c p_j.  A mixture whose smallest weight
    already meets the guarantee v / (1 + k v) is returned unchanged with
    c = 1, which makes the operation idempotent.
    """
    if not A > 0:
        raise DomainError("A must be positive")
    v = m.alpha ** (-A)
    w = m.weights
    if np.min(w) >= v / (1.0 + m.k * v):
        return m, 1.0
    low = w <= v
    c = 1.0 / (np.sum(w[~low]) + np.count_nonzero(low) * v)
    new = np.where(low, c * v, c * w)
    new = new / new.sum()
    return DiscreteMixture(m.alpha, new, m.eps.copy()), float(c)


def atom_budget(alpha: float, N0: float = 3.0) -> float:
    """N0 sqrt(alpha) (log alpha)^(3/2)."""
    return N0 * math.sqrt(alpha) * math.log(alpha) ** 1.5


@dataclass
class DiscreteReport:
    rows: list            # (alpha, kl, vp, atoms)
    slopes: dict
    budget_ratio: list
    runtime: float = 0.0

    def to_csv(self) -> str:
        lines = ["alpha,kl,vp,atoms"]
        lines += [f"{a:.17g},{k:.17g},{v:.17g},{n:d}" for a, k, v, n in self.rows]
        parts = [f"{k}_slope={s:.6g};{k}_se={e:.3g}" for k, (s, e) in self.slopes.items()]
        lines.append("# " + ";".join(parts))
        return "\n".join(lines) + "\n"


def discrete_mixture_for(f0: TargetDensity, alpha: float, steps: int | None = None,
                         t0: float = 1.0, M: float = 1.0, nodes_per_cell: int = 6,
                         A: float = 8.0) -> DiscreteMixture:
    """f1 from f0, discretized on the support grid, weights floored."""
    f1 = build_f1(f0, alpha, steps=steps).final
    disc = discretize(alpha, f1, support_grid(alpha, t0, M), nodes_per_cell)
    return floor_weights(disc.mixture, A)[0]


def discrete_kl_report(f0: TargetDensity, alpha_grid, steps: int | None = None,
                       p: float = 2.0, t0: float = 1.0, M: float = 1.0,
                       nodes_per_cell: int = 6, A: float = 8.0) -> DiscreteReport:
    """KL(f0, g_{alpha,P}), V_p and atom counts over an alpha grid."""
    alphas = np.asarray(alpha_grid, dtype=float)
    if len(alphas) < 2 or np.any(np.diff(alphas) <= 0):
        raise DomainError("alpha grid must be increasing with at least two entries")
    start = time.perf_counter()
    rows, ratios = [], []
    for a in alphas:
        m = discrete_mixture_for(f0, a, steps, t0, M, nodes_per_cell, A)
        rows.append((float(a), kl(f0, m, tol=1e-6), v_p(f0, m, p, tol=1e-6), m.k))
        ratios.append(m.k / (math.sqrt(a) * math.log(a) ** 1.5))
    arr = np.array(rows)
    slopes = {"kl": fit_slope(arr[:, 0], arr[:, 1]), "vp": fit_slope(arr[:, 0], arr[:, 2])}
    return DiscreteReport(rows=rows, slopes=slopes, budget_ratio=ratios,
                          runtime=time.perf_counter() - start)
