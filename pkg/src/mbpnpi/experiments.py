"""Monte Carlo against theory: empirical statistics, comparisons, verdicts."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import analytic
from .analytic import AnalyticContext
from .limits import LimitLaw, regime2_cdf, stable_cdf
from .simulator import DEFAULT_BUDGET, monte_carlo

LAMBDA_GRID = (0.25, 0.5, 1.0, 2.0, 4.0)
S_GRID = (0.25, 0.5, 0.75)
SIGMA_GRID = (0.2, 0.5, 0.8)
DEFAULT_TOLERANCES = {
    "lt": 0.05,
    "ks": 0.08,
    "survival": 0.0,
    "plateau": 0.005,
    "cond_pgf": 0.03,
    "formula": 0.02,
}


class RegimeMismatch(ValueError):
    pass


@dataclass
class Row:
    t: float
    statistic: str
    argument: float | None
    empirical: float | None
    theoretical: float | None
    abs_err: float | None
    se: float | None
    truncated_fraction: float | None = None


@dataclass
class Verdict:
    criterion: str
    passed: bool
    value: float
    tolerance: float
    se: float | None = None
    gating: bool = True
    detail: str = ""


@dataclass
class VerificationReport:
    regime: analytic.RegimeClass
    rows: list = field(default_factory=list)
    verdicts: list = field(default_factory=list)
    cdf_rows: list = field(default_factory=list)  # (t, x, empirical, theoretical)
    provenance: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(v.passed for v in self.verdicts if v.gating)

    def extend(self, other):
        self.rows.extend(other.rows)
        self.verdicts.extend(other.verdicts)
        self.cdf_rows.extend(other.cdf_rows)
        return self

    def rows_for(self, statistic, t=None):
        return [r for r in self.rows if r.statistic == statistic and (t is None or r.t == t)]

    def to_dict(self):
        return {
            "regime": {"label": self.regime.label(), "regime": self.regime.regime, "C": self.regime.C,
                       "Q": self.regime.Q, "notes": list(self.regime.notes)},
            "provenance": self.provenance,
            "passed": self.passed,
            "verdicts": [asdict(v) for v in self.verdicts],
            "rows": [asdict(r) for r in self.rows],
            "cdf": [list(c) for c in self.cdf_rows],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"


def verdict(criterion, err, tol, se=None, gating=True, detail=""):
    """PASS iff err <= max(tol, 4 se)."""
    bound = max(tol, 4.0 * se) if se is not None else tol
    return Verdict(criterion, bool(err <= bound), float(err), float(tol), None if se is None else float(se), gating, detail)


# ---------------------------------------------------------------------------
# empirical statistics

def _values(samples):
    if hasattr(samples, "as_float"):
        return samples.as_float()
    return np.asarray([float(v) for v in samples])


def empirical_lt(samples, normalizer, lam_grid=LAMBDA_GRID):
    """Mean of exp(-lam y / normalizer) per lam, and its standard error."""
    if not normalizer > 0:
        raise ValueError("normalizer must be positive")
    y = _values(samples) / normalizer
    lam = np.asarray(lam_grid, dtype=float)
    terms = np.exp(-np.outer(lam, y))
    return terms.mean(axis=1), terms.std(axis=1) / math.sqrt(y.size)


def proportion(hits):
    """Fraction of True and a binomial standard error that never collapses to 0."""
    hits = np.asarray(hits, dtype=bool)
    n = hits.size
    p = hits.mean()
    smooth = (hits.sum() + 0.5) / (n + 1.0)
    return float(p), math.sqrt(smooth * (1.0 - smooth) / n)


def ks_distance(samples, cdf):
    """sup_x |F_n(x) - F(x)|, using right values and left limits at the jumps."""
    x = np.sort(_values(samples))
    if x.size == 0:
        raise ValueError("need at least one sample")
    n = x.size
    xs, counts = np.unique(x, return_counts=True)
    right = np.cumsum(counts) / n
    left = right - counts / n
    f_right = np.asarray(cdf(xs), dtype=float)
    f_left = np.asarray(cdf(np.nextafter(xs, -np.inf)), dtype=float)
    return float(max(np.max(np.abs(right - f_right)), np.max(np.abs(left - f_left))))


def trend_ok(errors, ses, strict=False):
    """Errors nonincreasing along t, up to 4 combined standard errors unless strict."""
    for (e0, s0), (e1, s1) in zip(zip(errors, ses), zip(errors[1:], ses[1:])):
        slack = 0.0 if strict else 4.0 * math.hypot(s0, s1)
        if e1 > e0 + slack:
            return False
    return True


def derive_seed(master_seed, *keys):
    """64-bit seed for a sub-experiment, a pure function of the master seed and keys."""
    words = np.random.SeedSequence([int(master_seed) & (2**64 - 1), *keys]).generate_state(2, np.uint32)
    return int(words[0]) << 32 | int(words[1])


def _require(ctx, regime):
    got = analytic.classify_regime(ctx)
    if got.regime != regime:
        raise RegimeMismatch(f"model is in regime {got.regime}, expected {regime}")
    return got


def _new_report(regime, master_seed, digest):
    return VerificationReport(regime, provenance={"master_seed": int(master_seed), "config_digest": digest})


# ---------------------------------------------------------------------------
# Laplace-transform experiments (regimes I and II)

def _lt_experiment(report, name, ctx, target, normalizer, tgrid, n, seed, lam_grid, tol, workers, budget, tag,
                   cdf=None, cdf_tol=None):
    model = ctx.model
    errs, ses = [], []
    samples = None
    for i, t in enumerate(tgrid):
        samples = monte_carlo(model, t, n, derive_seed(seed, tag, i), workers, budget)
        norm = normalizer(t)
        emp, se = empirical_lt(samples, norm, lam_grid)
        th = np.asarray(target(np.asarray(lam_grid, dtype=float)))
        err = np.abs(emp - th)
        for lam, e, tv, a, s in zip(lam_grid, emp, th, err, se):
            report.rows.append(Row(float(t), "laplace_transform", float(lam), float(e), float(tv), float(a), float(s),
                                   samples.truncated_fraction))
        k = int(np.argmax(err))
        errs.append(float(err[k]))
        ses.append(float(se[k]))
        report.rows.append(Row(float(t), "max_lt_error", None, None, None, errs[-1], ses[-1], samples.truncated_fraction))
    report.verdicts.append(verdict(f"{name}: max LT error at t={tgrid[-1]:g}", errs[-1], tol, ses[-1]))
    report.verdicts.append(Verdict(f"{name}: LT error nonincreasing in t (within 4 SE)", trend_ok(errs, ses),
                                   float(errs[-1]), 0.0, None, True, "errors " + ", ".join(f"{e:.4g}" for e in errs)))
    report.verdicts.append(Verdict(f"{name}: LT error strictly nonincreasing in t", trend_ok(errs, ses, strict=True),
                                   float(errs[-1]), 0.0, None, False, "diagnostic; differences are below MC noise"))
    if cdf is not None and samples is not None:
        t = tgrid[-1]
        y = samples.as_float() / normalizer(t)
        if cdf_tol is not None:
            d = ks_distance(y, cdf)
            report.rows.append(Row(float(t), "ks_distance", None, d, 0.0, d, None, samples.truncated_fraction))
            report.verdicts.append(verdict(f"{name}: KS distance at t={t:g}", d, cdf_tol))
        grid = np.quantile(y, np.linspace(0.05, 0.95, 19))
        grid = grid[grid > 0]
        theo = np.asarray(cdf(grid), dtype=float)
        for x, f in zip(grid, theo):
            report.cdf_rows.append((float(t), float(x), float(np.mean(y <= x)), float(f)))
    return report


def run_regime_i(model, tgrid, n, seed, lam_grid=LAMBDA_GRID, tolerances=None, workers=1, budget=DEFAULT_BUDGET,
                 digest=""):
    """Y(t) / Psi^-1(rho t) against the stable law exp(-lam**alpha)."""
    tol = {**DEFAULT_TOLERANCES, **(tolerances or {})}
    ctx = AnalyticContext(model)
    regime = _require(ctx, "I")
    alpha = model.immigration.alpha
    rho = model.intensity.rho
    law = LimitLaw("StablePositive", alpha=alpha)
    report = _new_report(regime, seed, digest)
    cdf = (lambda x: stable_cdf(alpha, x)) if 0 < alpha < 1 else None
    return _lt_experiment(report, "regime I", ctx, law.lt, lambda t: analytic.psi_inv(ctx, rho * t), tgrid, n, seed,
                          lam_grid, tol["lt"], workers, budget, 1, cdf=cdf,
                          cdf_tol=tol["ks"] if alpha == 0.5 else None)


def run_regime_ii(model, tgrid, n, seed, lam_grid=LAMBDA_GRID, tolerances=None, workers=1, budget=DEFAULT_BUDGET,
                  digest=""):
    """Y(t) / W(mu t) against (1 + lam**gamma)**(-C rho)."""
    tol = {**DEFAULT_TOLERANCES, **(tolerances or {})}
    ctx = AnalyticContext(model)
    regime = _require(ctx, "II")
    gamma = model.offspring.gamma
    c_rho = regime.C * model.intensity.rho
    law = LimitLaw("RegimeII", gamma=gamma, c_rho=c_rho)
    report = _new_report(regime, seed, digest)
    return _lt_experiment(report, "regime II", ctx, law.lt, lambda t: analytic.w_of_y(ctx, model.mu * t), tgrid, n,
                          seed, lam_grid, tol["lt"], workers, budget, 2,
                          cdf=lambda x: regime2_cdf(gamma, c_rho, x, method="mixture"))


# ---------------------------------------------------------------------------
# survival and the conditional law (regime III)

def run_survival(model, tgrid, n, seed, epsilon=0.01, tolerances=None, workers=1, budget=DEFAULT_BUDGET, digest=""):
    """P(Y(t) > 0) against 1 - exp(-I(t; 0)); for infinite total mass also at t_eps."""
    tol = {**DEFAULT_TOLERANCES, **(tolerances or {})}
    ctx = AnalyticContext(model)
    regime = analytic.classify_regime(ctx)
    report = _new_report(regime, seed, digest)
    for i, t in enumerate(tgrid):
        samples = monte_carlo(model, t, n, derive_seed(seed, 3, i), workers, budget)
        emp, se = proportion(samples.positive())
        th = analytic.survival_prob(ctx, t)
        report.rows.append(Row(float(t), "survival", None, emp, th, abs(emp - th), se, samples.truncated_fraction))
        report.verdicts.append(verdict(f"survival at t={t:g}", abs(emp - th), tol["survival"], se,
                                       detail=f"truncated fraction {samples.truncated_fraction:.4g}"))
    if regime.regime in ("I", "II", "IV") and epsilon:
        t_eps = time_to_survival(ctx, epsilon)
        samples = monte_carlo(model, t_eps, n, derive_seed(seed, 4), workers, budget)
        emp, se = proportion(samples.positive())
        th = analytic.survival_prob(ctx, t_eps)
        report.rows.append(Row(float(t_eps), "survival_at_t_eps", epsilon, emp, 1.0 - epsilon,
                               max(0.0, 1.0 - epsilon - emp), se, samples.truncated_fraction))
        shortfall = max(0.0, (1.0 - epsilon) - emp)
        report.verdicts.append(verdict(f"survival exceeds 1-eps={1 - epsilon:g} at t_eps={t_eps:.6g}", shortfall, 0.0, se,
                                       detail=f"exact survival there {th:.6g}"))
    return report


def time_to_survival(ctx, epsilon):
    """t_eps solving rho Q(t) = log(1/eps)."""
    rho = ctx.model.intensity.rho
    goal = math.log(1.0 / epsilon)
    hi = 1.0
    while rho * analytic.Q_cum(ctx, hi) < goal:
        hi *= 2.0
        if hi > 1e300:
            raise analytic.RegimeError("Q(t) stays below the target; total mass is finite")
    return brentq(lambda t: rho * analytic.Q_cum(ctx, t) - goal, 0.0, hi, xtol=1e-12, rtol=1e-13)


def run_regime_iii(model, tgrid, n, seed, s_grid=S_GRID, tolerances=None, workers=1, budget=DEFAULT_BUDGET, digest=""):
    """Survival plateau 1 - exp(-rho Q) and the conditional generating function H(s)."""
    tol = {**DEFAULT_TOLERANCES, **(tolerances or {})}
    ctx = AnalyticContext(model)
    regime = _require(ctx, "III")
    rho = model.intensity.rho
    plateau = -math.expm1(-rho * regime.Q)
    report = _new_report(regime, seed, digest)
    for i, t in enumerate(tgrid):
        samples = monte_carlo(model, t, n, derive_seed(seed, 5, i), workers, budget)
        alive = samples.positive()
        emp, se = proportion(alive)
        th = analytic.survival_prob(ctx, t)
        tf = samples.truncated_fraction
        report.rows.append(Row(float(t), "survival", None, emp, th, abs(emp - th), se, tf))
        report.rows.append(Row(float(t), "survival_vs_limit", None, emp, plateau, abs(emp - plateau), se, tf))
        y = samples.as_float()[alive]
        for s in s_grid:
            vals = np.exp(y * math.log(s)) if s > 0 else np.zeros_like(y)
            e = float(vals.mean())
            sd = float(vals.std() / math.sqrt(max(y.size, 1)))
            h = analytic.H_pgf(ctx, s)
            report.rows.append(Row(float(t), "conditional_pgf", float(s), e, h, abs(e - h), sd, tf))
        if i == len(tgrid) - 1:
            report.verdicts.append(verdict(f"survival at t={t:g} vs limit {plateau:.6g}", abs(emp - plateau),
                                           tol["plateau"], se))
            for r in report.rows_for("conditional_pgf", float(t)):
                report.verdicts.append(verdict(f"conditional pgf at s={r.argument:g}, t={t:g}", r.abs_err,
                                               tol["cond_pgf"], r.se))
    return report


# ---------------------------------------------------------------------------
# regime IV

def regime_iv_formula(ctx, t, sigma, lam=1.0):
    """I(t; s(t)) with s(t) = exp(-lam / W(B^-1(sigma B(t)))); None if sigma B(t) < 1."""
    log_target = math.log(sigma) + analytic.log_B(ctx, t)
    if log_target < 0:
        return None
    # W(B^-1(y)) = A^-1(y)
    log_w = analytic.log_A_inv(ctx, log_target)
    one_minus_s = -math.expm1(-lam * math.exp(-log_w))
    return analytic.I_conv(ctx, t, one_minus_s=one_minus_s)


def run_regime_iv(model, tgrid, n, seed, sigma_grid=SIGMA_GRID, tolerances=None, workers=1, budget=DEFAULT_BUDGET,
                  digest="", formula_t=1e6, formula_trajectory=(1e2, 1e4), lam=1.0):
    """Formula-level limit check (gating) and Monte Carlo uniformity trend (diagnostic)."""
    tol = {**DEFAULT_TOLERANCES, **(tolerances or {})}
    ctx = AnalyticContext(model)
    regime = _require(ctx, "IV")
    report = _new_report(regime, seed, digest)
    for sigma in sigma_grid:
        target = -math.log(sigma)
        for t in (*formula_trajectory, formula_t):
            val = regime_iv_formula(ctx, t, sigma, lam)
            err = None if val is None else abs(val - target)
            report.rows.append(Row(float(t), "formula_I", float(sigma), val, target, err, None))
        name = f"formula I(t;s(t)) vs -ln sigma at sigma={sigma:g}, t={formula_t:g}"
        if err is None:
            report.verdicts.append(Verdict(name, False, target, tol["formula"], None, True,
                                           "sigma B(t) < 1, so s(t) is undefined at this t"))
        else:
            report.verdicts.append(verdict(name, err, tol["formula"]))
    if n and tgrid:
        dists, fracs = [], []
        for i, t in enumerate(tgrid):
            samples = monte_carlo(model, t, n, derive_seed(seed, 6, i), workers, budget)
            d, zero_frac = uniformity_distance(ctx, samples)
            dists.append(d)
            fracs.append(samples.truncated_fraction)
            report.rows.append(Row(float(t), "ks_uniform", None, d, 0.0, d, None, samples.truncated_fraction))
            report.rows.append(Row(float(t), "zero_fraction", None, zero_frac, None, None, None))
        decreasing = all(b < a for a, b in zip(dists, dists[1:]))
        report.verdicts.append(Verdict("KS of A(Y)/A(W(t)) vs uniform decreasing in t", decreasing, float(dists[-1]),
                                       0.0, None, False,
                                       "KS " + ", ".join(f"{d:.4g}" for d in dists)
                                       + "; truncated fractions " + ", ".join(f"{f:.3g}" for f in fracs)))
    return report


def uniformity_distance(ctx, samples):
    """KS distance of A(Y)/A(W(t)) from Uniform(0,1) over (0,1); zeros are set aside."""
    y = [v for v in samples.values if v > 0]
    zero_frac = 1.0 - len(y) / samples.n
    if not y:
        return 1.0, zero_frac
    log_norm = analytic.log_A(ctx, analytic.w_of_y(ctx, ctx.model.mu * samples.t))
    u = np.array([math.exp(analytic.log_A(ctx, float(v)) - log_norm) for v in y])
    return ks_distance(u, lambda x: np.clip(x, 0.0, 1.0)), zero_frac
