"""Command line: analytic, simulate, verify, classify.

Exit codes: 0 success, 1 usage or configuration error, 2 a verification
verdict failed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from . import analytic, experiments
from .analytic import AnalyticContext
from .config import ConfigError, load_config
from .limits import LimitLaw
from .simulator import monte_carlo

EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 1, 2

X_GRID = tuple(float(v) for v in np.logspace(0, 6, 13))
T_GRID = tuple(float(v) for v in np.logspace(-1, 4, 11))
LIMIT_X_GRID = tuple(float(v) for v in np.logspace(-2, 2, 9))


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# output

def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_atomic(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def write_csv(path, header, rows):
    lines = [",".join(header)]
    lines += [",".join(_cell(v) for v in row) for row in rows]
    write_atomic(path, "\n".join(lines) + "\n")


def write_json(path, obj):
    write_atomic(path, json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


def _provenance(cfg):
    return {"config_digest": cfg.digest(), "master_seed": cfg.seed}


# ---------------------------------------------------------------------------
# subcommands

def cmd_classify(cfg, args):
    regime = analytic.classify_regime(AnalyticContext(cfg.model.spec()))
    print(regime.label())
    for note in regime.notes:
        print(note, file=sys.stderr)
    return EXIT_OK


def _dump(out, name, args, values, method):
    write_csv(os.path.join(out, f"{name}.csv"), ("argument", "value", "method"),
              [(a, v, method) for a, v in zip(args, values)])


def cmd_analytic(cfg, args):
    model = cfg.model.spec()
    ctx = AnalyticContext(model)
    out = cfg.output.directory
    regime = analytic.classify_regime(ctx)
    offspring_method = "closed" if model.offspring.family == "PurePower" else "quadrature"
    method = "closed" if ctx.closed_form else "quadrature"
    files = []

    def dump(name, grid, fn, how):
        _dump(out, name, grid, [fn(v) for v in grid], how)
        files.append(f"{name}.csv")

    dump("V", X_GRID, lambda x: analytic.v_of_x(ctx, x), offspring_method)
    dump("W", X_GRID, lambda y: analytic.w_of_y(ctx, y), offspring_method)
    if model.immigration.family == "ScaledSibuya":
        floor = analytic.psi(ctx, 1.0)
        dump("psi_inv", tuple(y * floor for y in X_GRID), lambda y: analytic.psi_inv(ctx, y), method)
    dump("q0", T_GRID, lambda t: analytic.q0(ctx, t), method)
    dump("Q_cum", T_GRID, lambda t: analytic.Q_cum(ctx, t), method)
    dump("survival", T_GRID, lambda t: analytic.survival_prob(ctx, t), method)
    dump("void", T_GRID, lambda t: analytic.void_prob(ctx, t), method)
    if regime.regime == "III":
        s_grid = cfg.experiment.s_grid
        dump("delta", s_grid, lambda s: analytic.delta_s(ctx, s), method)
        dump("H", s_grid, lambda s: analytic.H_pgf(ctx, s), method)
    if regime.regime == "IV":
        dump("B", X_GRID, lambda x: analytic.B_fn(ctx, x), method)
        dump("A", X_GRID, lambda x: analytic.A_fn(ctx, x), method)
    law = None
    if regime.regime == "I":
        law = LimitLaw("StablePositive", alpha=model.immigration.alpha)
    elif regime.regime == "II" and regime.C is not None:
        law = LimitLaw("RegimeII", gamma=model.offspring.gamma, c_rho=regime.C * model.intensity.rho)
    if law is not None:
        lam = cfg.experiment.lambda_grid
        _dump(out, "limit_lt", lam, law.lt(np.asarray(lam)), "closed")
        files.append("limit_lt.csv")
        if law.kind == "RegimeII" or 0 < law.alpha < 1:
            _dump(out, "limit_cdf", LIMIT_X_GRID, law.cdf(np.asarray(LIMIT_X_GRID)), "quadrature")
            files.append("limit_cdf.csv")
    write_json(os.path.join(out, "run.json"),
               {**_provenance(cfg), "command": "analytic", "regime": regime.label(), "files": files,
                "config": json.loads(cfg.canonical())})
    return EXIT_OK


def cmd_simulate(cfg, args):
    model = cfg.model.spec()
    exp = cfg.experiment
    out = cfg.output.directory
    budget = cfg.budget.sim_budget()
    rows, fractions = [], {}
    for i, t in enumerate(exp.tgrid):
        samples = monte_carlo(model, t, exp.n, experiments.derive_seed(cfg.seed, 0, i), args.workers, budget,
                              cfg.budget.method)
        rows += [(j, t, y, tr) for j, (y, tr) in enumerate(zip(samples.values, samples.truncated))]
        fractions[_cell(t)] = samples.truncated_fraction
    write_csv(os.path.join(out, "samples.csv"), ("replicate", "t", "y", "truncated"), rows)
    write_json(os.path.join(out, "run.json"),
               {**_provenance(cfg), "command": "simulate", "n": exp.n, "tgrid": list(exp.tgrid),
                "truncated_fraction": fractions, "config": json.loads(cfg.canonical())})
    return EXIT_OK


RUNNERS = {
    "I": experiments.run_regime_i,
    "II": experiments.run_regime_ii,
    "III": experiments.run_regime_iii,
    "IV": experiments.run_regime_iv,
}


def run_verification(cfg, workers=1):
    """Full VerificationReport for a config: the regime check plus survival."""
    model = cfg.model.spec()
    exp = cfg.experiment
    ctx = AnalyticContext(model)
    regime = exp.regime
    if regime == "auto":
        regime = analytic.classify_regime(ctx).regime
    common = dict(tolerances=exp.tolerances.model_dump(), workers=workers, budget=cfg.budget.sim_budget(),
                  digest=cfg.digest())
    if regime in ("I", "II"):
        report = RUNNERS[regime](model, exp.tgrid, exp.n, cfg.seed, lam_grid=exp.lambda_grid, **common)
    elif regime == "III":
        report = RUNNERS[regime](model, exp.tgrid, exp.n, cfg.seed, s_grid=exp.s_grid, **common)
    else:
        report = RUNNERS[regime](model, exp.tgrid, exp.n, cfg.seed, sigma_grid=exp.sigma_grid,
                                 formula_t=exp.formula_t, **common)
    if exp.survival_n:
        report.extend(experiments.run_survival(model, exp.survival_tgrid, exp.survival_n, cfg.seed,
                                               epsilon=exp.epsilon if regime != "III" else None, **common))
    return report


def write_report(report, out):
    write_json(os.path.join(out, "report.json"), report.to_dict())
    final_lt = [r for r in report.rows_for("laplace_transform")]
    if final_lt:
        last = final_lt[-1].t
        write_csv(os.path.join(out, "lt.csv"), ("lambda", "empirical", "theoretical", "abs_err", "se"),
                  [(r.argument, r.empirical, r.theoretical, r.abs_err, r.se) for r in final_lt if r.t == last])
    if report.cdf_rows:
        last = report.cdf_rows[-1][0]
        write_csv(os.path.join(out, "cdf.csv"), ("x", "empirical", "theoretical"),
                  [row[1:] for row in report.cdf_rows if row[0] == last])
    surv = report.rows_for("survival") + report.rows_for("survival_at_t_eps")
    if surv:
        write_csv(os.path.join(out, "survival.csv"), ("t", "empirical", "theoretical", "se"),
                  [(r.t, r.empirical, r.theoretical, r.se) for r in surv])
    pgf = report.rows_for("conditional_pgf")
    if pgf:
        write_csv(os.path.join(out, "pgf.csv"), ("t", "s", "empirical", "theoretical", "abs_err", "se"),
                  [(r.t, r.argument, r.empirical, r.theoretical, r.abs_err, r.se) for r in pgf])
    formula = report.rows_for("formula_I")
    if formula:
        write_csv(os.path.join(out, "formula.csv"), ("t", "sigma", "value", "target", "abs_err"),
                  [(r.t, r.argument, r.empirical, r.theoretical, r.abs_err) for r in formula])
    ks = report.rows_for("ks_uniform")
    if ks:
        write_csv(os.path.join(out, "ks.csv"), ("t", "ks", "truncated_fraction"),
                  [(r.t, r.empirical, r.truncated_fraction) for r in ks])


def cmd_verify(cfg, args):
    report = run_verification(cfg, args.workers)
    write_report(report, cfg.output.directory)
    for v in report.verdicts:
        tag = "PASS" if v.passed else "FAIL"
        if not v.gating:
            tag += " (diagnostic)"
        print(f"{tag}  {v.criterion}  value={v.value:.6g}")
    return EXIT_OK if report.passed else EXIT_FAIL


COMMANDS = {"analytic": cmd_analytic, "simulate": cmd_simulate, "verify": cmd_verify, "classify": cmd_classify}


def build_parser():
    parser = _Parser(prog="mbpnpi", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, metavar="PATH")
        p.add_argument("--out", metavar="DIR")
        p.add_argument("--seed", type=int, metavar="N")
        p.add_argument("--workers", type=int, default=1, metavar="N")
    return parser


def run_cli(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if args.workers < 1:
            raise UsageError("--workers must be >= 1")
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.out is not None:
            overrides["output"] = {"directory": args.out}
        cfg = load_config(args.config, overrides)
        return COMMANDS[args.command](cfg, args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
    except ConfigError as exc:
        for path, reason in exc.errors:
            print(f"config error at {path}: {reason}", file=sys.stderr)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
    except (ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_USAGE


def main():
    sys.exit(run_cli())
