"""Rate experiments and their reports.

An experiment sweeps alpha (approximation experiments) or the sample size
n (posterior experiments), records error metrics per cell, fits a log-log
slope and compares it with the theoretical exponent.  Reports are written
as ``report.csv``, ``report.svg`` and ``report.txt``.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from concurrent.futures import TimeoutError as FuturesTimeout
from dataclasses import dataclass, field, fields

import numpy as np
from scipy import stats

from .approx_continuous import approx_error, fit_slope
from .approx_discrete import discrete_mixture_for
from .corpus import density_corpus
from .errors import ContractError, DomainError
from .mixtures import kl, v_p
from .priors import (AdaptivePriorConfig, DPPriorConfig, alpha_schedule, log_pi_eps,
                     parse_kv, prior_from_config, sample_adaptive)
from .sampler import density_grid, dp_fit, effective_sample_size, posterior_mean_density, rjmcmc_fit

KINDS = ("approx-continuous", "approx-discrete", "posterior-rate", "prior-sanity")
INSUFFICIENT = "insufficient data"


def _floats(text):
    return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


@dataclass
class ExperimentConfig:
    kind: str = "approx-continuous"
    density: str = "beta22"
    density_param: float | None = None
    alphas: list = field(default_factory=lambda: [100.0, 200.0, 400.0, 800.0, 1600.0, 3200.0, 6400.0])
    ns: list = field(default_factory=lambda: [250, 500, 1000, 2000, 4000])
    reps: int = 5
    seed: int = 0
    tolerance: float = 0.2
    beta: float | None = None          # smoothness used for theory slopes
    steps: int | None = None           # correction steps (default from beta)
    p: float = 2.0
    t0: float = 1.0
    M: float = 1.0
    nodes_per_cell: int = 6
    A: float = 8.0
    mode: str = "adaptive"             # posterior: adaptive | fixed-alpha | dirichlet
    iters: int = 3000
    burnin: int = 1000
    thin: int = 2
    draws: int = 100_000               # prior-sanity sample size
    sweeps: int = 100_000              # prior-sanity zero-data chain length
    prior: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"kind must be one of {KINDS}")
        grid = self.ns if self.kind == "posterior-rate" else self.alphas
        if self.kind != "prior-sanity":
            if len(grid) == 0 or np.any(np.diff(grid) <= 0):
                raise DomainError("sweep grid must be nonempty and increasing")
        if self.reps < 1:
            raise DomainError("reps must be at least 1")
        if self.mode not in ("adaptive", "fixed-alpha", "dirichlet"):
            raise DomainError("mode must be adaptive, fixed-alpha or dirichlet")

    def target(self):
        return density_corpus(self.density, self.density_param)

    def rate_beta(self) -> float:
        return self.target().beta if self.beta is None else self.beta

    @classmethod
    def from_mapping(cls, values: dict) -> "ExperimentConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {"prior": dict(values)}
        for key, raw in values.items():
            if key not in known or key == "prior":
                continue
            if key in ("alphas",):
                kwargs[key] = _floats(raw)
            elif key == "ns":
                kwargs[key] = [int(v) for v in _floats(raw)]
            elif key in ("reps", "seed", "nodes_per_cell", "iters", "burnin", "thin",
                         "draws", "sweeps", "steps"):
                kwargs[key] = int(raw)
            elif key in ("density_param", "tolerance", "beta", "p", "t0", "M", "A"):
                kwargs[key] = float(raw)
            else:
                kwargs[key] = raw
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_mapping(parse_kv(fh.read()))


@dataclass
class ExperimentReport:
    kind: str
    sweep: str                         # name of the sweep variable
    columns: list                      # metric names after the sweep column
    rows: list = field(default_factory=list)
    theory: float = math.nan
    tolerance: float = math.nan
    slope: float = math.nan
    slope_se: float = math.nan
    verdict: str = INSUFFICIENT
    annotation: str = ""
    complete: bool = True
    trend: bool = False                # require a (nearly) monotone decrease
    label: str = ""

    def finalize(self):
        self.rows.sort(key=lambda r: r[0])
        self.slope, self.slope_se, self.verdict, self.annotation = judge(
            self.rows, self.theory, self.tolerance, self.trend)
        if not self.complete:
            self.annotation = (self.annotation + "; " if self.annotation else "") + "incomplete"
        return self


def inversions(values) -> int:
    """Number of consecutive increases in a sequence meant to decrease."""
    v = np.asarray(values, dtype=float)
    return int(np.sum(np.diff(v) > 0))


def judge(rows, theory: float, tolerance: float, trend: bool = False):
    """Slope, its standard error, verdict and annotation from report rows.

    The slope is fitted to the first metric column.  A slope steeper than
    theory by more than the tolerance passes with an annotation, since the
    theoretical rates are upper bounds.
    """
    rows = [r for r in rows if np.isfinite(r[1]) and r[1] > 0]
    if len(rows) < 2:
        return math.nan, math.nan, INSUFFICIENT, ""
    x = [r[0] for r in rows]
    y = [r[1] for r in rows]
    slope, se = fit_slope(x, y)
    notes = []
    ok = slope <= theory + tolerance
    if slope < theory - tolerance:
        notes.append("faster than theory")
    if trend:
        inv = inversions(y)
        if inv > 1:
            ok = False
        notes.append(f"{inv} inversion(s)")
    return slope, se, "pass" if ok else "fail", "; ".join(notes)


# ---------------------------------------------------------------------------
# Approximation experiments

def _effective_beta(beta: float, steps: int) -> float:
    return min(beta, 2.0 * (steps + 1))


def run_approx_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    from .approx_continuous import correction_steps
    f = cfg.target()
    beta = cfg.rate_beta()
    steps = correction_steps(beta) if cfg.steps is None else cfg.steps
    b_eff = _effective_beta(beta, steps)
    if cfg.kind == "approx-continuous":
        rep = ExperimentReport(kind=cfg.kind, sweep="alpha", columns=["sup_err", "kl", "vp", "runtime"],
                               theory=-b_eff / 2.0, tolerance=cfg.tolerance,
                               label=f"{f.name}, {steps} correction step(s)")
        for a in cfg.alphas:
            t = time.perf_counter()
            sup, k, v = approx_error(f, a, steps, cfg.p)
            rep.rows.append((float(a), sup, k, v, time.perf_counter() - t))
    elif cfg.kind == "approx-discrete":
        # kernels vanish like x^alpha at 0, so (0, alpha^-t0) is left
        # uncovered; where f ~ x^k0 it adds ~ alpha^(1 - (k0 + 1) t0) to the KL
        k0 = min(f.k0, f.k1)
        rep = ExperimentReport(kind=cfg.kind, sweep="alpha", columns=["kl", "vp", "atoms", "runtime"],
                               theory=0.0 - min(b_eff, (k0 + 1.0) * cfg.t0 - 1.0), tolerance=cfg.tolerance,
                               label=f"{f.name}, t0={cfg.t0:g}, M={cfg.M:g}, N={cfg.nodes_per_cell}")
        for a in cfg.alphas:
            t = time.perf_counter()
            m = discrete_mixture_for(f, a, steps, cfg.t0, cfg.M, cfg.nodes_per_cell, cfg.A)
            rep.rows.append((float(a), kl(f, m, tol=1e-6), v_p(f, m, cfg.p, tol=1e-6), m.k,
                             time.perf_counter() - t))
    else:
        raise ContractError(f"{cfg.kind} is not an approximation experiment")
    return rep.finalize()


# ---------------------------------------------------------------------------
# Posterior experiments

def _posterior_cell(args):
    """One (n, replication) cell; top level so it can run in a worker process."""
    (density, param, seed, i, r, n, n_max, mode, beta, prior, iters, burnin, thin) = args
    start = time.perf_counter()
    f = density_corpus(density, param)
    # replication r uses the first n points of one fixed sample, so the
    # sweep over n differs only in sample size
    x = f.sample(np.random.default_rng([seed, r]), n_max)[:n]
    chain_seed = [seed, i, r]
    if mode == "dirichlet":
        pc = prior if isinstance(prior, DPPriorConfig) else DPPriorConfig(n=n)
        pc = DPPriorConfig(**{**pc.__dict__, "n": n})
        chain = dp_fit(x, pc, iters, seed=chain_seed, burnin=burnin, thin=thin)
    else:
        pc = prior if isinstance(prior, AdaptivePriorConfig) else AdaptivePriorConfig()
        kw = {"fixed_alpha": alpha_schedule(n, beta)} if mode == "fixed-alpha" else {}
        chain = rjmcmc_fit(x, pc, iters, seed=chain_seed, burnin=burnin, thin=thin, **kw)
    gx, gw = density_grid()
    pm = posterior_mean_density(chain, burnin // thin, gx)
    return i, r, float(gw @ np.abs(pm - f(gx))), time.perf_counter() - start


def run_posterior_experiment(cfg: ExperimentConfig, threads: int = 1,
                             budget_seconds: float | None = None) -> ExperimentReport:
    beta = cfg.rate_beta()
    prior = prior_from_config(cfg.prior) if cfg.prior.get("prior") else None
    ns = [int(n) for n in cfg.ns]
    tasks = [(cfg.density, cfg.density_param, cfg.seed, i, r, n, ns[-1], cfg.mode, beta, prior,
              cfg.iters, cfg.burnin, cfg.thin)
             for i, n in enumerate(ns) for r in range(cfg.reps)]
    start = time.perf_counter()
    results = {}
    complete = True

    def over_budget():
        return budget_seconds is not None and time.perf_counter() - start > budget_seconds

    if threads <= 1:
        for task in tasks:
            if over_budget():
                complete = False
                break
            i, r, err, secs = _posterior_cell(task)
            results[(i, r)] = (err, secs)
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_posterior_cell, t) for t in tasks]
            for fut in futures:
                remaining = None if budget_seconds is None else max(
                    0.0, budget_seconds - (time.perf_counter() - start))
                try:
                    i, r, err, secs = fut.result(timeout=remaining)
                    results[(i, r)] = (err, secs)
                except FuturesTimeout:
                    complete = False
                    break
            if not complete:
                for fut in futures:
                    fut.cancel()

    rep = ExperimentReport(kind=cfg.kind, sweep="n", columns=["median_l1", "reps", "runtime"],
                           theory=-beta / (2.0 * beta + 1.0), tolerance=cfg.tolerance,
                           trend=True, complete=complete,
                           label=f"{cfg.density}, {cfg.mode} prior, beta={beta:g}")
    for i, n in enumerate(ns):
        done = [results[(i, r)] for r in range(cfg.reps) if (i, r) in results]
        if done:
            errs, secs = zip(*done)
            rep.rows.append((float(n), float(np.median(errs)), len(errs), float(sum(secs))))
    return rep.finalize()


# ---------------------------------------------------------------------------
# Prior sanity

def chi_square_k(ks, log_pk, n_eff: float | None = None):
    """Chi-square test of a sample of k against p(k).

    Bins with expected count below 5 are pooled into the last bin.  With
    ``n_eff`` (autocorrelated draws) the statistic is rescaled by
    n_eff / n.
    """
    ks = np.asarray(ks, dtype=int)
    n = len(ks)
    p = np.exp(log_pk)
    kmax = 1
    while kmax < len(p) and n * p[kmax] >= 5:
        kmax += 1
    expected = np.append(p[: kmax - 1], p[kmax - 1:].sum()) * n
    observed = np.array([np.sum(ks == k) for k in range(1, kmax)] + [np.sum(ks >= kmax)])
    stat = float(np.sum((observed - expected) ** 2 / expected))
    if n_eff is not None:
        stat *= n_eff / n
    dof = max(len(expected) - 1, 1)
    return stat, float(stats.chi2.sf(stat, dof))


def run_prior_sanity(cfg: ExperimentConfig) -> ExperimentReport:
    pc = prior_from_config(cfg.prior) if cfg.prior.get("prior") else AdaptivePriorConfig()
    if not isinstance(pc, AdaptivePriorConfig):
        raise ContractError("prior sanity checks use the adaptive prior")
    rng = np.random.default_rng([cfg.seed, 0])
    eps, roots = [], []
    while len(eps) < cfg.draws:
        _, m = sample_adaptive(pc, rng)
        eps.extend(m.eps.tolist())
        roots.append(math.sqrt(m.alpha))
    roots = np.array(roots)
    # sqrt(alpha) is drawn once per mixture; draw more mixtures until both reach cfg.draws
    while len(roots) < cfg.draws:
        _, m = sample_adaptive(pc, rng)
        roots = np.append(roots, math.sqrt(m.alpha))
    eps = np.array(eps[: cfg.draws])
    ks_e = stats.kstest(eps, stats.beta(pc.T + 1, pc.T + 1).cdf)
    ks_a = stats.kstest(roots[: cfg.draws],
                        stats.gamma(pc.sqrt_alpha_shape, scale=1.0 / pc.sqrt_alpha_rate).cdf)
    chain = rjmcmc_fit([], pc, cfg.sweeps, seed=[cfg.seed, 1], burnin=min(1000, cfg.sweeps // 10))
    burn = min(1000, cfg.sweeps // 10)
    ks_chain = np.array([rec.mixture.k for rec in chain[burn:]])
    n_eff = effective_sample_size(ks_chain)
    chi, chi_p = chi_square_k(ks_chain, pc.log_pk_table(), n_eff)
    rep = ExperimentReport(kind=cfg.kind, sweep="test", columns=["statistic", "pvalue"],
                           tolerance=0.01, label="prior sanity")
    rep.rows = [("ks_eps", float(ks_e.statistic), float(ks_e.pvalue)),
                ("ks_sqrt_alpha", float(ks_a.statistic), float(ks_a.pvalue)),
                ("chi2_k_zero_data", chi, chi_p)]
    ok = all(p >= rep.tolerance for _, _, p in rep.rows)
    rep.verdict = "pass" if ok else "fail"
    rep.annotation = f"chain ESS(k) = {n_eff:.0f}"
    return rep


def run_experiment(cfg: ExperimentConfig, threads: int = 1,
                   budget_seconds: float | None = None) -> ExperimentReport:
    if cfg.kind in ("approx-continuous", "approx-discrete"):
        return run_approx_experiment(cfg)
    if cfg.kind == "posterior-rate":
        return run_posterior_experiment(cfg, threads, budget_seconds)
    return run_prior_sanity(cfg)


# ---------------------------------------------------------------------------
# Report files

def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.10g}"


def report_csv(rep: ExperimentReport) -> str:
    """CSV schema: header ``<sweep>,<metrics...>``, one row per cell, then a
    trailing ``# key=value;...`` line with slope, slope_se, theory,
    tolerance, trend, verdict, complete and annotation."""
    lines = [",".join([rep.sweep, *rep.columns])]
    if not rep.rows:
        return lines[0] + "\n"
    lines += [",".join(_fmt(v) for v in row) for row in rep.rows]
    meta = {"kind": rep.kind, "slope": _fmt(rep.slope), "slope_se": _fmt(rep.slope_se),
            "theory": _fmt(rep.theory), "tolerance": _fmt(rep.tolerance),
            "trend": str(rep.trend).lower(), "verdict": rep.verdict,
            "complete": str(rep.complete).lower(), "annotation": rep.annotation.replace(";", ","),
            "label": rep.label.replace(";", ",")}
    lines.append("# " + ";".join(f"{k}={v}" for k, v in meta.items()))
    return "\n".join(lines) + "\n"


def _parse_value(text):
    try:
        return float(text)
    except ValueError:
        return text


def parse_report_csv(text: str) -> ExperimentReport:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ContractError("empty report")
    header = lines[0].split(",")
    meta = {}
    rows = []
    for ln in lines[1:]:
        if ln.startswith("#"):
            for part in ln[1:].strip().split(";"):
                key, _, value = part.partition("=")
                meta[key.strip()] = value
            continue
        rows.append(tuple(_parse_value(v) for v in ln.split(",")))
    rep = ExperimentReport(kind=meta.get("kind", ""), sweep=header[0], columns=header[1:],
                           rows=rows, theory=float(meta.get("theory", "nan")),
                           tolerance=float(meta.get("tolerance", "nan")),
                           slope=float(meta.get("slope", "nan")),
                           slope_se=float(meta.get("slope_se", "nan")),
                           verdict=meta.get("verdict", INSUFFICIENT),
                           annotation=meta.get("annotation", ""),
                           complete=meta.get("complete", "true") == "true",
                           trend=meta.get("trend", "false") == "true",
                           label=meta.get("label", ""))
    return rep


def report_svg(rep: ExperimentReport) -> str:
    """Log-log scatter of the first metric with fitted and theory lines."""
    pts = [(r[0], r[1]) for r in rep.rows if r[1] > 0]
    W, H, pad = 480, 360, 50
    lx = np.log10([p[0] for p in pts])
    ly = np.log10([p[1] for p in pts])
    lines_y = [ly]
    xs = np.array([lx.min(), lx.max()])
    cx, cy = lx.mean(), ly.mean()
    fitted = cy + rep.slope * (xs - cx) if np.isfinite(rep.slope) else None
    theory = cy + rep.theory * (xs - cx) if np.isfinite(rep.theory) else None
    for extra in (fitted, theory):
        if extra is not None:
            lines_y.append(extra)
    y_all = np.concatenate(lines_y)
    x0, x1 = lx.min(), lx.max() if lx.max() > lx.min() else lx.min() + 1
    y0, y1 = y_all.min(), y_all.max() if y_all.max() > y_all.min() else y_all.min() + 1

    def sx(v):
        return pad + (v - x0) / (x1 - x0) * (W - 2 * pad)

    def sy(v):
        return H - pad - (v - y0) / (y1 - y0) * (H - 2 * pad)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}">',
           f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
           f'<line x1="{pad}" y1="{H - pad}" x2="{W - pad}" y2="{H - pad}" stroke="black"/>',
           f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{H - pad}" stroke="black"/>',
           f'<text x="{W / 2:.1f}" y="{H - 12}" text-anchor="middle" font-size="12">'
           f'log10 {rep.sweep}</text>',
           f'<text x="14" y="{H / 2:.1f}" text-anchor="middle" font-size="12" '
           f'transform="rotate(-90 14 {H / 2:.1f})">log10 {rep.columns[0]}</text>']
    for name, ys, colour, dash in (("fitted", fitted, "steelblue", ""),
                                   ("theory", theory, "firebrick", ' stroke-dasharray="6 4"')):
        if ys is not None:
            out.append(f'<line x1="{sx(xs[0]):.2f}" y1="{sy(ys[0]):.2f}" x2="{sx(xs[1]):.2f}" '
                       f'y2="{sy(ys[1]):.2f}" stroke="{colour}"{dash}><title>{name}</title></line>')
    for a, b in zip(lx, ly):
        out.append(f'<circle cx="{sx(a):.2f}" cy="{sy(b):.2f}" r="3.5" fill="black"/>')
    out.append(f'<text x="{pad}" y="{pad - 18}" font-size="12">{rep.label}: slope '
               f'{_fmt(rep.slope)} (theory {_fmt(rep.theory)}), {rep.verdict}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def report_text(rep: ExperimentReport) -> str:
    lines = [f"experiment: {rep.kind}", f"label: {rep.label}", f"cells: {len(rep.rows)}"]
    if np.isfinite(rep.slope):
        lines.append(f"slope: {rep.slope:.4f} +/- {rep.slope_se:.4f}")
    if np.isfinite(rep.theory):
        lines.append(f"theory slope: {rep.theory:.4f} (tolerance {rep.tolerance:g})")
    lines.append(f"complete: {str(rep.complete).lower()}")
    if rep.annotation:
        lines.append(f"note: {rep.annotation}")
    lines.append(f"verdict: {rep.verdict}")
    return "\n".join(lines) + "\n"


def emit_report(rep: ExperimentReport, directory) -> list:
    """Write report.csv, report.svg (if there is something to plot) and report.txt."""
    written = []
    try:
        os.makedirs(directory, exist_ok=True)
        files = {"report.csv": report_csv(rep), "report.txt": report_text(rep)}
        numeric = [r for r in rep.rows if not isinstance(r[0], str)]
        if numeric and rep.kind != "prior-sanity":
            files["report.svg"] = report_svg(rep)
        for name, body in files.items():
            path = os.path.join(directory, name)
            with open(path, "w", newline="\n") as fh:
                fh.write(body)
            written.append(path)
    except OSError as exc:
        raise OSError(f"cannot write report to {directory}: {exc}") from exc
    return written
