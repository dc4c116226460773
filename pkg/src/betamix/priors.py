"""Priors on Beta mixtures and the matching posterior rate formulas.

Two priors are provided:

* the adaptive prior: a number of components k with p(k) proportional to
  exp(-a_k k L(k)), symmetric Dirichlet weights, Beta(T+1, T+1) component
  means and sqrt(alpha) ~ Gamma(shape, rate);
* a Dirichlet process prior on the mixing distribution with base measure
  mass * Beta(T1+1, T1+1) and sqrt(alpha) = n^(t/2) + Gamma(shape, rate),
  so that alpha >= n^t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np
from scipy import stats
from scipy.special import gammaln

from .errors import BudgetError, ContractError, DomainError
from .mixtures import DiscreteMixture

L_MODES = ("constant-one", "log-k")
K_MAX = 500
DP_RESIDUAL = 1e-10


@dataclass(frozen=True)
class AdaptivePriorConfig:
    a_k: float = 1.0
    L_mode: str = "log-k"
    T: float = 1.0
    dirichlet_conc: float = 1.0
    sqrt_alpha_shape: float = 1.0
    sqrt_alpha_rate: float = 0.5
    k_max: int = K_MAX

    def __post_init__(self):
        if not self.a_k > 0:
            raise DomainError("a_k must be positive")
        if self.L_mode not in L_MODES:
            raise DomainError(f"L_mode must be one of {L_MODES}")
        if not self.T >= 1:
            raise DomainError("T must be at least 1")
        if not self.dirichlet_conc > 0:
            raise DomainError("dirichlet_conc must be positive")
        if not (self.sqrt_alpha_shape >= 1 and self.sqrt_alpha_rate > 0):
            raise DomainError("sqrt(alpha) prior needs shape >= 1 and rate > 0")
        if not self.k_max >= 1:
            raise DomainError("k_max must be at least 1")

    @property
    def sqrt_alpha_gamma(self) -> tuple[float, float]:
        return self.sqrt_alpha_shape, self.sqrt_alpha_rate

    def L(self, k):
        k = np.asarray(k, dtype=float)
        return np.ones_like(k) if self.L_mode == "constant-one" else np.log(k)

    def log_pk_table(self) -> np.ndarray:
        """log p(k) for k = 1..k_max, normalized over that range."""
        k = np.arange(1, self.k_max + 1)
        lw = -self.a_k * k * self.L(k)
        return lw - np.logaddexp.reduce(lw)


@dataclass(frozen=True)
class DPPriorConfig:
    mass: float = 1.0
    T1: float = 1.0
    t: float = 0.5
    n: int = 1
    sqrt_alpha_shape: float = 1.0
    sqrt_alpha_rate: float = 0.5

    def __post_init__(self):
        if not self.mass > 0:
            raise DomainError("mass must be positive")
        if not self.T1 >= 0:
            raise DomainError("T1 must be nonnegative")
        if not 0 < self.t < 1:
            raise DomainError("t must lie in (0, 1)")
        if not self.n >= 1:
            raise DomainError("n must be at least 1")
        if not (self.sqrt_alpha_shape > 0 and self.sqrt_alpha_rate > 0):
            raise DomainError("sqrt(alpha) prior needs positive shape and rate")

    @property
    def alpha_floor(self) -> float:
        return float(self.n) ** self.t

    @property
    def sqrt_alpha_gamma(self) -> tuple[float, float]:
        return self.sqrt_alpha_shape, self.sqrt_alpha_rate


def _gamma_logpdf(y, shape, rate):
    return stats.gamma.logpdf(y, shape, scale=1.0 / rate)


def log_pi_alpha(alpha, shape, rate, shift=0.0):
    """log density of alpha when sqrt(alpha) - shift ~ Gamma(shape, rate)."""
    alpha = np.asarray(alpha, dtype=float)
    r = np.sqrt(alpha)
    with np.errstate(divide="ignore"):
        out = _gamma_logpdf(r - shift, shape, rate) - np.log(2.0 * r)
    out = np.where(r > shift, out, -np.inf)
    return float(out) if out.ndim == 0 else out


def log_pi_eps(eps, T):
    """log Beta(T+1, T+1) density."""
    return stats.beta.logpdf(eps, T + 1.0, T + 1.0)


def log_dirichlet(weights, conc):
    """Symmetric Dirichlet log-density w.r.t. Lebesgue measure on the first
    k-1 coordinates (0 for k = 1)."""
    w = np.asarray(weights, dtype=float)
    k = len(w)
    if k == 1:
        return 0.0
    return float(gammaln(k * conc) - k * gammaln(conc) + (conc - 1.0) * np.sum(np.log(w)))


def log_prior_adaptive(cfg: AdaptivePriorConfig, k: int, weights, eps_list, alpha) -> float:
    w = np.atleast_1d(np.asarray(weights, dtype=float))
    e = np.atleast_1d(np.asarray(eps_list, dtype=float))
    if len(w) != k or len(e) != k:
        raise ContractError(f"expected {k} weights and means, got {len(w)} and {len(e)}")
    if not 1 <= k <= cfg.k_max:
        return -math.inf
    if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
        raise DomainError("weights must lie on the simplex")
    if np.any((e <= 0) | (e >= 1)):
        raise DomainError("means must lie in (0, 1)")
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    return float(cfg.log_pk_table()[k - 1] + log_dirichlet(w, cfg.dirichlet_conc)
                 + np.sum(log_pi_eps(e, cfg.T))
                 + log_pi_alpha(alpha, cfg.sqrt_alpha_shape, cfg.sqrt_alpha_rate))


def _positive_dirichlet(rng, conc, k):
    # Gamma draws can underflow to 0 for small concentrations; redraw those.
    while True:
        g = rng.gamma(conc, size=k)
        if np.all(g > 0):
            return g / g.sum()


def sample_adaptive(cfg: AdaptivePriorConfig, rng: np.random.Generator):
    """One exact prior draw; returns ``(k, DiscreteMixture)``."""
    p = np.exp(cfg.log_pk_table())
    k = int(min(np.searchsorted(np.cumsum(p), rng.random() * p.sum()) + 1, cfg.k_max))
    w = _positive_dirichlet(rng, cfg.dirichlet_conc, k)
    e = rng.beta(cfg.T + 1.0, cfg.T + 1.0, size=k)
    r = rng.gamma(cfg.sqrt_alpha_shape, 1.0 / cfg.sqrt_alpha_rate)
    return k, DiscreteMixture(r * r, w, e)


def dp_truncation_residual(mass: float, truncation: int) -> float:
    """Expected stick mass left after ``truncation`` breaks, (mass/(1+mass))^T."""
    return (mass / (1.0 + mass)) ** truncation


def check_truncation(mass: float, truncation: int):
    res = dp_truncation_residual(mass, truncation)
    if not res < DP_RESIDUAL:
        need = math.ceil(math.log(DP_RESIDUAL) / math.log(mass / (1.0 + mass)))
        raise BudgetError(f"truncation {truncation} leaves expected residual {res:.3g}; "
                          f"need at least {need}")
    return res


def stick_weights(v: np.ndarray) -> np.ndarray:
    """w_j = v_j prod_{l<j} (1 - v_l); the last fraction should be 1."""
    rest = np.concatenate([[1.0], np.cumprod(1.0 - v[:-1])])
    return v * rest


def sample_dp(cfg: DPPriorConfig, rng: np.random.Generator, truncation: int = 200):
    """Truncated stick-breaking draw of P ~ DP(mass Beta(T1+1, T1+1)).

    The last fraction is set to 1, so the residual stick goes to the last
    atom.  Atoms whose weight underflows to 0 are dropped.
    """
    check_truncation(cfg.mass, truncation)
    v = rng.beta(1.0, cfg.mass, size=truncation)
    v[-1] = 1.0
    w = stick_weights(v)
    e = rng.beta(cfg.T1 + 1.0, cfg.T1 + 1.0, size=truncation)
    r = math.sqrt(cfg.alpha_floor) + rng.gamma(cfg.sqrt_alpha_shape, 1.0 / cfg.sqrt_alpha_rate)
    keep = w > 0
    w = w[keep]
    return DiscreteMixture(r * r, w / w.sum(), e[keep])


# ---------------------------------------------------------------------------
# Rate formulas (up to the constant tau_0)

PRIOR_KINDS = ("adaptive", "dirichlet", "fixed")


def alpha_schedule(n: float, beta: float) -> float:
    """alpha_n = n^(2/(2 beta + 1)) (log n)^(-3/(2 beta + 1))."""
    return n ** (2.0 / (2.0 * beta + 1.0)) * math.log(n) ** (-3.0 / (2.0 * beta + 1.0))


def rate_tau(beta: float, n: float, prior_kind: str = "adaptive", cfg=None,
             alpha_n: float | None = None) -> float:
    """Posterior concentration rate divided by its constant.

    ``adaptive``: n^(-b/(2b+1)) (log n)^(5b/(4b+2)) with L(k) = log k, and an
    extra (log n)^(1/2) when L is constant.  ``dirichlet``: the two branches
    split at beta = 1/t - 1/2.  ``fixed``: deterministic alpha_n (default
    the schedule), log(alpha_n) max(alpha_n^(-b/2), (sqrt(alpha_n) log(alpha_n) / n)^(1/2)).
    """
    if not (beta > 0 and n > 1):
        raise DomainError("need beta > 0 and n > 1")
    ln = math.log(n)
    b = beta
    if prior_kind == "adaptive":
        mode = getattr(cfg, "L_mode", "log-k")
        out = n ** (-b / (2 * b + 1)) * ln ** (5 * b / (4 * b + 2))
        return out * math.sqrt(ln) if mode == "constant-one" else out
    if prior_kind == "dirichlet":
        t = getattr(cfg, "t", None)
        if t is None or not 0 < t < 1:
            raise DomainError("dirichlet rate needs 0 < t < 1")
        if b <= 1.0 / t - 0.5:
            return n ** (-b / (2 * b + 1)) * ln ** (5 * b / (2 * b + 1))
        return n ** (-0.5 + t / 4.0) * ln ** ((6 * b + 0.5) / (2 * b + 1))
    if prior_kind == "fixed":
        a = alpha_schedule(n, b) if alpha_n is None else float(alpha_n)
        if not 1 < a < n:
            raise DomainError("alpha_n must lie in (1, n)")
        la = math.log(a)
        return la * max(a ** (-b / 2.0), math.sqrt(math.sqrt(a) * la / n))
    raise DomainError(f"prior_kind must be one of {PRIOR_KINDS}")


# ---------------------------------------------------------------------------
# key=value configuration

def parse_kv(text: str) -> dict:
    """Parse ``key = value`` lines; '#' starts a comment."""
    out = {}
    for num, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ContractError(f"line {num}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def _coerce(cls, values: dict):
    kwargs = {}
    for f in fields(cls):
        if f.name in values:
            typ = type(f.default)
            kwargs[f.name] = typ(values[f.name]) if typ is not str else values[f.name]
    return cls(**kwargs)


def prior_from_config(values: dict):
    """Build a prior config from parsed key=value pairs.

    ``prior = adaptive`` (default) or ``prior = dirichlet``; remaining keys
    are the dataclass field names.  Unknown keys are ignored so a single
    file can also hold experiment settings.
    """
    kind = values.get("prior", "adaptive")
    if kind == "adaptive":
        return _coerce(AdaptivePriorConfig, values)
    if kind == "dirichlet":
        return _coerce(DPPriorConfig, values)
    raise DomainError(f"unknown prior {kind!r}")
