"""Test densities on [0, 1] with closed-form CDFs and exact samplers."""

from __future__ import annotations

import math

import numpy as np

from .errors import CatalogError, DomainError
from .mixtures import TargetDensity

BISECTION_TOL = 1e-12


def inverse_cdf_sampler(cdf):
    """Sampler drawing U(0,1) and inverting a monotone CDF by bisection."""

    def sample(rng: np.random.Generator, size: int) -> np.ndarray:
        u = rng.random(size)
        lo = np.zeros(size)
        hi = np.ones(size)
        # 40 halvings bring the bracket below 1e-12
        for _ in range(math.ceil(math.log2(1.0 / BISECTION_TOL))):
            mid = 0.5 * (lo + hi)
            below = cdf(mid) < u
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)

    return sample


def _zeros(x):
    return np.zeros_like(np.asarray(x, dtype=float))


def uniform() -> TargetDensity:
    cdf = lambda x: np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    return TargetDensity(
        name="uniform", pdf=lambda x: np.ones_like(np.asarray(x, dtype=float)),
        derivs=(_zeros,) * 6, beta=8.0, L=1.0, k0=0, k1=0,
        sampler=inverse_cdf_sampler(cdf), cdf=cdf)


def beta22() -> TargetDensity:
    """6 x (1 - x): vanishes linearly at both ends."""

    def cdf(x):
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        return x * x * (3.0 - 2.0 * x)

    return TargetDensity(
        name="beta22", pdf=lambda x: 6.0 * x * (1.0 - x),
        derivs=(lambda x: 6.0 - 12.0 * x, lambda x: np.full_like(x, -12.0),
                _zeros, _zeros, _zeros, _zeros),
        beta=4.0, L=1.0, k0=1, k1=1, sampler=inverse_cdf_sampler(cdf), cdf=cdf)


def rough(beta: float) -> TargetDensity:
    """(1 + |2x - 1|^beta / 2) / Z: Holder of order beta at x = 1/2."""
    if not 0.0 < beta <= 1.0:
        raise DomainError("rough family needs 0 < beta <= 1")
    z = 1.0 + 0.5 / (beta + 1.0)

    def pdf(x):
        x = np.asarray(x, dtype=float)
        return (1.0 + 0.5 * np.abs(2.0 * x - 1.0) ** beta) / z

    def cdf(x):
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        t = np.abs(2.0 * x - 1.0) ** (beta + 1.0) / (4.0 * (beta + 1.0))
        half = 0.5 + 1.0 / (4.0 * (beta + 1.0))
        left = x + 1.0 / (4.0 * (beta + 1.0)) - t
        right = half + (x - 0.5) + t
        return np.where(x <= 0.5, left, right) / z

    return TargetDensity(
        name=f"rough{beta:g}", pdf=pdf, beta=float(beta), L=2.0 ** (beta - 1.0) / z,
        k0=0, k1=0, sampler=inverse_cdf_sampler(cdf), cdf=cdf, breakpoints=(0.5,))


def density_corpus(name: str, param: float | None = None) -> TargetDensity:
    """Look up a corpus density: ``uniform``, ``beta22`` or ``rough`` (needs beta)."""
    if name == "uniform":
        return uniform()
    if name == "beta22":
        return beta22()
    if name == "rough":
        if param is None:
            raise DomainError("rough density needs a smoothness parameter")
        return rough(float(param))
    raise CatalogError(f"unknown density {name!r}")
