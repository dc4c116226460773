"""Posterior sampling for Beta mixtures.

``rjmcmc_fit`` runs a reversible-jump chain over (k, weights, means, alpha)
under the adaptive prior; ``dp_fit`` runs a blocked Gibbs sampler for the
truncated Dirichlet process prior.  Both take all randomness from one
seeded generator, so a seed reproduces a chain exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import expit, gammaln, logit, logsumexp

from .errors import ContractError, DomainError
from .kernel import log_stirling_bracket
from .mixtures import DiscreteMixture, mix_log_pdf, mix_pdf
from .numkit import LOG_SQRT_2PI
from .priors import (AdaptivePriorConfig, DPPriorConfig, check_truncation, log_dirichlet,
                     log_pi_alpha, log_pi_eps, stick_weights)

JITTER = 1e-9
_ADAPT_EVERY = 50
_TARGET_ACCEPT = 0.3


def prepare_data(data, jitter: bool = False) -> np.ndarray:
    """Validate observations; with ``jitter`` values at 0 or 1 are moved to
    1e-9 and 1 - 1e-9 instead of rejected."""
    x = np.asarray(data, dtype=float).ravel()
    if np.any(~np.isfinite(x)) or np.any((x < 0) | (x > 1)):
        raise DomainError("observations must lie in [0, 1]")
    edge = (x <= 0) | (x >= 1)
    if np.any(edge):
        if not jitter:
            raise DomainError("observations at 0 or 1 are outside the model support; "
                              "jitter them into (1e-9, 1 - 1e-9) at ingestion")
        x = np.clip(x, JITTER, 1.0 - JITTER)
    return x


def log_likelihood(m: DiscreteMixture, data) -> float:
    x = prepare_data(data)
    if len(x) == 0:
        return 0.0
    return float(np.sum(mix_log_pdf(m, x)))


class _Data:
    """Observations with cached log x and log(1 - x)."""

    def __init__(self, x):
        self.x = x
        self.lx = np.log(x)
        self.l1x = np.log1p(-x)
        self.n = len(x)

    def log_kernel(self, alpha, eps):
        """Rows log g_{alpha, eps_j}(x_i) for each mean in ``eps``."""
        eps = np.atleast_1d(np.asarray(eps, dtype=float))
        a = alpha / (1.0 - eps)
        b = alpha / eps
        const = (0.5 * math.log(alpha) - LOG_SQRT_2PI - a * np.log(eps) - b * np.log1p(-eps)
                 + log_stirling_bracket(alpha, eps))
        return const[:, None] + (a - 1.0)[:, None] * self.lx + (b - 1.0)[:, None] * self.l1x


@dataclass
class ChainRecord:
    iteration: int
    model: int
    mixture: DiscreteMixture
    loglik: float
    logprior: float
    accepted: dict = field(default_factory=dict)
    proposed: dict = field(default_factory=dict)
    counts: np.ndarray | None = None     # DP allocation counts per stick

    def to_line(self) -> str:
        parts = [str(self.iteration), str(self.mixture.k), f"{self.mixture.alpha:.17g}"]
        parts += [f"{w:.17g} {e:.17g}" for w, e in zip(self.mixture.weights, self.mixture.eps)]
        parts += [f"{self.loglik:.17g}", f"{self.logprior:.17g}"]
        return " ".join(parts)

    @classmethod
    def from_line(cls, line: str) -> "ChainRecord":
        tok = line.split()
        k = int(tok[1])
        if len(tok) != 5 + 2 * k:
            raise ContractError(f"record with k={k} needs {5 + 2 * k} fields, got {len(tok)}")
        pairs = np.array(tok[3:3 + 2 * k], dtype=float).reshape(k, 2)
        m = DiscreteMixture(float(tok[2]), pairs[:, 0], pairs[:, 1])
        return cls(int(tok[0]), k, m, float(tok[-2]), float(tok[-1]))


def write_chain(chain, path):
    with open(path, "w") as fh:
        for rec in chain:
            fh.write(rec.to_line() + "\n")


def read_chain(path):
    with open(path) as fh:
        return [ChainRecord.from_line(line) for line in fh if line.strip()]


# ---------------------------------------------------------------------------
# Reversible jump

def _move_probs(k: int, k_max: int) -> tuple[float, float]:
    """(birth, death) probabilities at k."""
    if k_max == 1:
        return 0.0, 0.0
    if k == 1:
        return 1.0, 0.0
    if k == k_max:
        return 0.0, 1.0
    return 0.5, 0.5


def _log_q_u(u: float, k: int) -> float:
    # Beta(1, k) proposal for the new weight
    return math.log(k) + (k - 1) * math.log1p(-u)


def birth_log_ratio(cfg: AdaptivePriorConfig, k: int, w_old, w_new, u: float,
                    dloglik: float) -> float:
    """log acceptance ratio of a birth from k to k+1 components.

    The new mean is drawn from its prior, so its prior and proposal
    densities cancel; the choice of insertion slot (1/(k+1)) cancels with
    the uniform choice of the component removed by the reverse death.
    The weight map (w, u) -> ((1-u) w, u) has Jacobian (1-u)^(k-1).
    """
    log_pk = cfg.log_pk_table()
    b_k, _ = _move_probs(k, cfg.k_max)
    _, d_k1 = _move_probs(k + 1, cfg.k_max)
    return (dloglik + log_pk[k] - log_pk[k - 1]
            + log_dirichlet(w_new, cfg.dirichlet_conc) - log_dirichlet(w_old, cfg.dirichlet_conc)
            + math.log(d_k1) - math.log(b_k) - _log_q_u(u, k) + (k - 1) * math.log1p(-u))


def death_log_ratio(cfg: AdaptivePriorConfig, k1: int, w_old, j: int, dloglik: float) -> float:
    """log acceptance ratio for removing component j from k1 = k+1 components."""
    w_old = np.asarray(w_old, dtype=float)
    u = float(w_old[j])
    w_new = np.delete(w_old, j) / (1.0 - u)
    return -birth_log_ratio(cfg, k1 - 1, w_new, w_old, u, -dloglik)


class _RJState:
    def __init__(self, data: _Data, alpha, w, e):
        self.data = data
        self.alpha = float(alpha)
        self.w = np.asarray(w, dtype=float)
        self.e = np.asarray(e, dtype=float)
        self.logG = data.log_kernel(self.alpha, self.e)
        self.loglik = self._loglik(self.logG, self.w)

    @property
    def k(self):
        return len(self.w)

    def _loglik(self, logG, w):
        if self.data.n == 0:
            return 0.0
        return float(np.sum(logsumexp(logG + np.log(w)[:, None], axis=0)))


def rjmcmc_fit(data, cfg: AdaptivePriorConfig, iters: int, seed: int = 0,
               burnin: int | None = None, fixed_k: int | None = None,
               fixed_alpha: float | None = None, thin: int = 1, init=None):
    """Reversible-jump MCMC under the adaptive prior.

    Each sweep updates every mean by a random walk on logit(eps), the
    weights by a Dirichlet perturbation, alpha by a random walk on
    log(alpha), then attempts one birth or death.  Random-walk scales adapt
    towards 30% acceptance during the first ``burnin`` sweeps only.
    ``fixed_k`` disables birth/death; ``fixed_alpha`` holds alpha fixed.
    Returns one :class:`ChainRecord` per ``thin`` sweeps.
    """
    if iters < 1:
        raise DomainError("iters must be at least 1")
    x = prepare_data(data)
    dat = _Data(x)
    rng = np.random.default_rng(seed)
    burnin = iters // 4 if burnin is None else int(burnin)
    if init is not None:
        state = _RJState(dat, init.alpha, init.weights, init.eps)
    else:
        k0 = fixed_k or 1
        alpha0 = fixed_alpha if fixed_alpha is not None else 4.0
        state = _RJState(dat, alpha0, np.full(k0, 1.0 / k0), (np.arange(k0) + 0.5) / k0)
    if fixed_alpha is not None and state.alpha != fixed_alpha:
        raise ContractError("initial alpha differs from fixed_alpha")
    if fixed_k is not None and state.k != fixed_k:
        raise ContractError("initial state has the wrong number of components")

    step = {"eps": 0.5, "alpha": 0.3}
    conc = 200.0
    names = ("eps", "weights", "alpha", "birth", "death")
    acc = dict.fromkeys(names, 0)
    prop = dict.fromkeys(names, 0)
    window = {"eps": [0, 0], "alpha": [0, 0]}

    def log_prior(s):
        return log_prior_state(cfg, s, fixed_alpha is not None)

    chain = []
    for it in range(1, iters + 1):
        # means
        for j in range(state.k):
            z = logit(state.e[j]) + step["eps"] * rng.standard_normal()
            e_new = float(expit(z))
            prop["eps"] += 1
            window["eps"][1] += 1
            if not 0.0 < e_new < 1.0:
                continue
            row = dat.log_kernel(state.alpha, [e_new])[0]
            logG = state.logG.copy()
            logG[j] = row
            ll = state._loglik(logG, state.w)
            lr = (ll - state.loglik + log_pi_eps(e_new, cfg.T) - log_pi_eps(state.e[j], cfg.T)
                  + math.log(e_new * (1.0 - e_new)) - math.log(state.e[j] * (1.0 - state.e[j])))
            if math.log(rng.random()) < lr:
                state.e = state.e.copy()
                state.e[j] = e_new
                state.logG, state.loglik = logG, ll
                acc["eps"] += 1
                window["eps"][0] += 1

        # weights
        if state.k > 1:
            prop["weights"] += 1
            w_new = rng.dirichlet(conc * state.w)
            if np.all(w_new > 0):
                w_new = w_new / w_new.sum()
                ll = state._loglik(state.logG, w_new)
                lr = (ll - state.loglik
                      + log_dirichlet(w_new, cfg.dirichlet_conc)
                      - log_dirichlet(state.w, cfg.dirichlet_conc)
                      + _log_dir_density(state.w, conc * w_new)
                      - _log_dir_density(w_new, conc * state.w))
                if math.log(rng.random()) < lr:
                    state.w, state.loglik = w_new, ll
                    acc["weights"] += 1

        # alpha
        if fixed_alpha is None:
            prop["alpha"] += 1
            window["alpha"][1] += 1
            a_new = state.alpha * math.exp(step["alpha"] * rng.standard_normal())
            logG = dat.log_kernel(a_new, state.e)
            ll = state._loglik(logG, state.w)
            lr = (ll - state.loglik
                  + log_pi_alpha(a_new, cfg.sqrt_alpha_shape, cfg.sqrt_alpha_rate)
                  - log_pi_alpha(state.alpha, cfg.sqrt_alpha_shape, cfg.sqrt_alpha_rate)
                  + math.log(a_new / state.alpha))
            if np.isfinite(lr) and math.log(rng.random()) < lr:
                state.alpha, state.logG, state.loglik = a_new, logG, ll
                acc["alpha"] += 1
                window["alpha"][0] += 1

        # birth / death
        if fixed_k is None:
            b_k, d_k = _move_probs(state.k, cfg.k_max)
            if rng.random() < b_k:
                prop["birth"] += 1
                k = state.k
                u = float(rng.beta(1.0, k))
                e_new = float(rng.beta(cfg.T + 1.0, cfg.T + 1.0))
                pos = int(rng.integers(k + 1))
                if 0.0 < u < 1.0 and 0.0 < e_new < 1.0:
                    w_new = np.insert(state.w * (1.0 - u), pos, u)
                    e_all = np.insert(state.e, pos, e_new)
                    logG = np.insert(state.logG, pos, dat.log_kernel(state.alpha, [e_new])[0], axis=0)
                    ll = state._loglik(logG, w_new)
                    lr = birth_log_ratio(cfg, k, state.w, w_new, u, ll - state.loglik)
                    if math.log(rng.random()) < lr:
                        state.w, state.e, state.logG, state.loglik = w_new / w_new.sum(), e_all, logG, ll
                        acc["birth"] += 1
            elif d_k > 0:
                prop["death"] += 1
                j = int(rng.integers(state.k))
                u = state.w[j]
                if u < 1.0:
                    w_new = np.delete(state.w, j) / (1.0 - u)
                    logG = np.delete(state.logG, j, axis=0)
                    ll = state._loglik(logG, w_new)
                    lr = death_log_ratio(cfg, state.k, state.w, j, ll - state.loglik)
                    if math.log(rng.random()) < lr:
                        state.w = w_new / w_new.sum()
                        state.e = np.delete(state.e, j)
                        state.logG, state.loglik = logG, ll
                        acc["death"] += 1

        if it <= burnin and it % _ADAPT_EVERY == 0:
            for name, (a, p) in window.items():
                if p:
                    step[name] *= math.exp((a / p - _TARGET_ACCEPT))
            window = {"eps": [0, 0], "alpha": [0, 0]}

        if it % thin == 0:
            m = DiscreteMixture(state.alpha, state.w, state.e)
            chain.append(ChainRecord(it, state.k, m, state.loglik, log_prior(state),
                                     dict(acc), dict(prop)))
    return chain


def _log_dir_density(x, a):
    a = np.asarray(a, dtype=float)
    return float(gammaln(a.sum()) - np.sum(gammaln(a)) + np.sum((a - 1.0) * np.log(x)))


def log_prior_state(cfg: AdaptivePriorConfig, state, alpha_fixed=False) -> float:
    k = len(state.w)
    out = (cfg.log_pk_table()[k - 1] + log_dirichlet(state.w, cfg.dirichlet_conc)
           + float(np.sum(log_pi_eps(state.e, cfg.T))))
    if not alpha_fixed:
        out += log_pi_alpha(state.alpha, cfg.sqrt_alpha_shape, cfg.sqrt_alpha_rate)
    return float(out)


# ---------------------------------------------------------------------------
# Dirichlet process, truncated stick-breaking

def dp_fit(data, cfg: DPPriorConfig, iters: int, seed: int = 0, truncation: int = 200,
           burnin: int | None = None, thin: int = 1):
    """Blocked Gibbs sampler for the truncated DP mixture.

    Each sweep draws allocations from their categorical conditionals, stick
    fractions from Beta(1 + n_j, mass + sum_{l>j} n_l), occupied means by a
    logit random walk and empty ones from the base measure, and alpha by a
    log random walk restricted to alpha >= n^t.
    """
    if iters < 1:
        raise DomainError("iters must be at least 1")
    check_truncation(cfg.mass, truncation)
    x = prepare_data(data)
    dat = _Data(x)
    n = dat.n
    rng = np.random.default_rng(seed)
    burnin = iters // 4 if burnin is None else int(burnin)
    T = truncation
    shape, rate = cfg.sqrt_alpha_shape, cfg.sqrt_alpha_rate
    shift = math.sqrt(cfg.alpha_floor)
    base = cfg.T1 + 1.0

    v = rng.beta(1.0, cfg.mass, size=T)
    v[-1] = 1.0
    e = rng.beta(base, base, size=T)
    r = shift + shape / rate
    alpha = r * r
    step = {"eps": 0.5, "alpha": 0.3}
    names = ("eps", "alpha")
    acc = dict.fromkeys(names, 0)
    prop = dict.fromkeys(names, 0)
    window = {"eps": [0, 0], "alpha": [0, 0]}
    chain = []
    z = np.zeros(n, dtype=int)

    for it in range(1, iters + 1):
        w = stick_weights(v)
        with np.errstate(divide="ignore"):
            logw = np.log(w)
        logG = dat.log_kernel(alpha, e) if n else np.zeros((T, 0))

        if n:
            lp = logG + logw[:, None]
            lp -= lp.max(axis=0)
            p = np.exp(lp)
            cum = np.cumsum(p, axis=0)
            u = rng.random(n) * cum[-1]
            z = np.minimum((cum < u[None, :]).sum(axis=0), T - 1)
        counts = np.bincount(z, minlength=T) if n else np.zeros(T, dtype=int)
        tail = np.concatenate([np.cumsum(counts[::-1])[::-1][1:], [0]])
        v = rng.beta(1.0 + counts, cfg.mass + tail)
        v[-1] = 1.0

        for j in range(T):
            if counts[j] == 0:
                e[j] = rng.beta(base, base)
                continue
            xs = z == j
            prop["eps"] += 1
            window["eps"][1] += 1
            e_new = float(expit(logit(e[j]) + step["eps"] * rng.standard_normal()))
            if not 0.0 < e_new < 1.0:
                continue
            old = np.sum(logG[j, xs])
            new = np.sum(dat.log_kernel(alpha, [e_new])[0, xs])
            lr = (new - old + log_pi_eps(e_new, cfg.T1) - log_pi_eps(e[j], cfg.T1)
                  + math.log(e_new * (1 - e_new)) - math.log(e[j] * (1 - e[j])))
            if math.log(rng.random()) < lr:
                e[j] = e_new
                logG[j] = dat.log_kernel(alpha, [e_new])[0]
                acc["eps"] += 1
                window["eps"][0] += 1

        prop["alpha"] += 1
        window["alpha"][1] += 1
        a_new = alpha * math.exp(step["alpha"] * rng.standard_normal())
        if a_new > cfg.alpha_floor:
            occupied = np.flatnonzero(counts)
            old = sum(np.sum(logG[j, z == j]) for j in occupied)
            lg_new = dat.log_kernel(a_new, e[occupied]) if n else None
            new = sum(np.sum(lg_new[i, z == j]) for i, j in enumerate(occupied))
            lr = (new - old + log_pi_alpha(a_new, shape, rate, shift)
                  - log_pi_alpha(alpha, shape, rate, shift) + math.log(a_new / alpha))
            if np.isfinite(lr) and math.log(rng.random()) < lr:
                alpha = a_new
                acc["alpha"] += 1
                window["alpha"][0] += 1

        if it <= burnin and it % _ADAPT_EVERY == 0:
            for name, (a, p) in window.items():
                if p:
                    step[name] *= math.exp(a / p - _TARGET_ACCEPT)
            window = {"eps": [0, 0], "alpha": [0, 0]}

        if it % thin == 0:
            w = stick_weights(v)
            keep = w > 0
            m = DiscreteMixture(alpha, w[keep] / w[keep].sum(), e[keep].copy())
            ll = float(np.sum(mix_log_pdf(m, x))) if n else 0.0
            lprior = float(np.sum(stats.beta.logpdf(v[:-1], 1.0, cfg.mass))
                           + np.sum(log_pi_eps(e, cfg.T1))
                           + log_pi_alpha(alpha, shape, rate, shift))
            chain.append(ChainRecord(it, T, m, ll, lprior, dict(acc), dict(prop),
                                     counts=counts.copy()))
    return chain


# ---------------------------------------------------------------------------
# Summaries

def density_grid(panels: int = 64, nodes: int = 16):
    """Composite Gauss-Legendre nodes and weights on (0, 1), graded at both ends."""
    half = np.concatenate([[0.0], np.geomspace(1e-8, 0.5, panels // 2)])
    edges = np.unique(np.concatenate([half, 1.0 - half[::-1]]))
    t, w = np.polynomial.legendre.leggauss(nodes)
    h = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    return (mid[:, None] + h[:, None] * t).ravel(), (h[:, None] * w).ravel()


def posterior_mean_density(chain, burnin: int, grid) -> np.ndarray:
    """Average of the recorded mixture densities after ``burnin`` records."""
    post = chain[burnin:]
    if not post:
        raise ContractError("no records after burn-in")
    grid = np.asarray(grid, dtype=float)
    total = np.zeros_like(grid)
    for rec in post:
        total += mix_pdf(rec.mixture, grid)
    return total / len(post)


def autocorrelation(x) -> np.ndarray:
    x = np.asarray(x, dtype=float) - np.mean(x)
    n = len(x)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n] / n
    return acov / acov[0] if acov[0] > 0 else np.zeros(n)


def effective_sample_size(x) -> float:
    """ESS with Geyer's initial monotone positive-pair truncation."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 4 or np.ptp(x) == 0:
        return float(n)
    rho = autocorrelation(x)
    pairs = rho[: n - n % 2].reshape(-1, 2).sum(axis=1)
    tau = -1.0
    prev = math.inf
    for g in pairs:
        if g <= 0:
            break
        g = min(g, prev)
        tau += 2.0 * g
        prev = g
    return float(n / max(tau, 1e-12))


@dataclass
class Diagnostics:
    acceptance: dict
    ess_loglik: float
    k_hist: dict

    def to_csv(self) -> str:
        lines = ["quantity,value"]
        lines += [f"accept_{k},{v:.6g}" for k, v in self.acceptance.items()]
        lines.append(f"ess_loglik,{self.ess_loglik:.6g}")
        lines += [f"k_{k},{v}" for k, v in sorted(self.k_hist.items())]
        return "\n".join(lines) + "\n"


def diagnostics(chain, burnin: int = 0) -> Diagnostics:
    if not chain[burnin:]:
        raise ContractError("no records after burn-in")
    last = chain[-1]
    rates = {k: (last.accepted.get(k, 0) / p if p else math.nan)
             for k, p in last.proposed.items()}
    ll = [r.loglik for r in chain[burnin:]]
    ks = [r.mixture.k for r in chain[burnin:]]
    vals, counts = np.unique(ks, return_counts=True)
    return Diagnostics(rates, effective_sample_size(ll),
                       {int(v): int(c) for v, c in zip(vals, counts)})
