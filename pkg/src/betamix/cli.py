"""Command line driver: ``betamix {approx,discretize,fit,rates,priorcheck}``.

Exit status is 0 when the verdict passes, 2 when it fails and 1 on errors.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .errors import BetaMixError
from .experiments import ExperimentConfig, emit_report, run_experiment
from .priors import AdaptivePriorConfig, DPPriorConfig, parse_kv, prior_from_config

EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2

_KIND = {"approx": "approx-continuous", "discretize": "approx-discrete",
         "rates": "posterior-rate", "priorcheck": "prior-sanity"}


def _read_config(path) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        return parse_kv(fh.read())


def _experiment_config(args) -> ExperimentConfig:
    values = _read_config(args.config)
    values.setdefault("kind", _KIND[args.command])
    if values["kind"] != _KIND[args.command] and args.command != "approx":
        raise BetaMixError(f"config kind {values['kind']!r} does not match '{args.command}'")
    if args.seed is not None:
        values["seed"] = str(args.seed)
    return ExperimentConfig.from_mapping(values)


def _run_experiment(args) -> int:
    cfg = _experiment_config(args)
    rep = run_experiment(cfg, threads=args.threads, budget_seconds=args.budget_seconds)
    emit_report(rep, args.out)
    if cfg.kind == "approx-discrete":
        from .approx_discrete import discrete_mixture_for
        m = discrete_mixture_for(cfg.target(), cfg.alphas[-1], cfg.steps, cfg.t0, cfg.M,
                                 cfg.nodes_per_cell, cfg.A)
        with open(os.path.join(args.out, "mixture.txt"), "w") as fh:
            fh.write(m.to_text())
    print(f"{rep.kind}: slope {rep.slope:.4g}, theory {rep.theory:.4g}, verdict {rep.verdict}"
          + (f" ({rep.annotation})" if rep.annotation else ""))
    return EXIT_PASS if rep.verdict == "pass" else EXIT_FAIL


def read_data(path) -> np.ndarray:
    """One observation per line; blank lines and '#' comments are ignored."""
    values = []
    with open(path) as fh:
        for num, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            try:
                values.append(float(text))
            except ValueError:
                raise BetaMixError(f"{path}:{num}: not a number: {text!r}") from None
    return np.array(values)


def _run_fit(args) -> int:
    from .sampler import (density_grid, diagnostics, dp_fit, posterior_mean_density,
                          prepare_data, rjmcmc_fit, write_chain)
    if args.data is None:
        raise BetaMixError("fit needs --data")
    values = _read_config(args.config)
    x = prepare_data(read_data(args.data), jitter=values.get("jitter", "false") == "true")
    iters = int(values.get("iters", 5000))
    burnin = int(values.get("burnin", iters // 4))
    thin = int(values.get("thin", 1))
    seed = args.seed if args.seed is not None else int(values.get("seed", 0))
    if values.get("prior", "adaptive") == "dirichlet":
        values.setdefault("n", str(len(x)))
        cfg = prior_from_config(values)
        chain = dp_fit(x, cfg, iters, seed=seed, burnin=burnin, thin=thin)
    else:
        cfg = prior_from_config(values)
        fixed = values.get("fixed_alpha")
        chain = rjmcmc_fit(x, cfg, iters, seed=seed, burnin=burnin, thin=thin,
                           fixed_alpha=None if fixed is None else float(fixed))
    os.makedirs(args.out, exist_ok=True)
    write_chain(chain, os.path.join(args.out, "chain.txt"))
    gx, gw = density_grid()
    pm = posterior_mean_density(chain, burnin // thin, gx)
    with open(os.path.join(args.out, "posterior_mean.csv"), "w") as fh:
        fh.write("x,density\n")
        fh.writelines(f"{a:.10g},{b:.10g}\n" for a, b in zip(gx, pm))
    diag = diagnostics(chain, burnin // thin)
    with open(os.path.join(args.out, "diagnostics.csv"), "w") as fh:
        fh.write(diag.to_csv())
    mass = float(gw @ pm)
    ok = abs(mass - 1.0) <= 1e-6
    print(f"fit: {len(chain)} records, posterior mean mass {mass:.8f}, "
          f"ESS(loglik) {diag.ess_loglik:.0f}, verdict {'pass' if ok else 'fail'}")
    return EXIT_PASS if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="betamix", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {"approx": "continuous-mixture approximation rates",
             "discretize": "discrete-mixture approximation rates",
             "fit": "posterior sampling for a data file",
             "rates": "posterior contraction experiment",
             "priorcheck": "prior sampler sanity checks"}
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="key=value configuration file")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--budget-seconds", type=float, default=None)
        if name == "fit":
            p.add_argument("--data", help="observations in (0, 1), one per line")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.seed is not None and args.seed < 0:
            raise BetaMixError("seed must be nonnegative")
        if args.threads < 1:
            raise BetaMixError("--threads must be at least 1")
        if args.command == "fit":
            return _run_fit(args)
        return _run_experiment(args)
    except (BetaMixError, ValueError, ArithmeticError, OSError, KeyError) as exc:
        print(f"betamix {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
