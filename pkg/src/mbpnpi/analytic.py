"""Analytic functions of the process: invariant-measure calculus and friends.

Notation, for an offspring generating function ``f`` and immigration
generating function ``g``:

* ``V(x) = int_0^{1-1/x} du / (f(u) - u)`` and ``W`` its inverse, so that
  ``1 / (1 - F(t; s)) = W(mu t + V(1 / (1 - s)))``.
* ``Psi(x) = 1 / (1 - g(1 - 1/x))``.
* ``q(t; s) = 1 / Psi(W(mu t + V(1/(1-s))))``, ``q0(t) = q(t; 0)``.
* ``I(t; s) = int_0^t r(t - u) q(u; s) du`` and ``Phi = exp(-I)`` is the
  generating function of the population at time t.

The generic path integrates in ``z = log x``. Writing
``h(z) = (1 - g(1 - e^{-z})) / (e^z (f(1 - e^{-z}) - (1 - e^{-z})))``,
every integral of ``q`` collapses to a single integral of ``h`` after the
substitution ``w = W(mu u + V(x0))``. For instance
``int_0^t q(u; s) du = (1/mu) int_{log x0}^{log W(mu t + V(x0))} h(z) dz``.
That removes the nested root-finding a literal quadrature of ``q`` needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .laws import ModelSpec

MAX_LOG_X = math.log(1e300)


class QuadratureError(ArithmeticError):
    pass


class RegimeError(ValueError):
    pass


@dataclass(frozen=True)
class AnalyticContext:
    model: ModelSpec
    rtol: float = 1e-8
    limit: int = 400
    bracket_growth: float = 2.0
    root_tol: float = 1e-10

    @property
    def closed_form(self):
        return self.model.closed_form


def _pick(ctx, method):
    if method == "auto":
        return "closed" if ctx.closed_form else "quadrature"
    if method == "closed" and not ctx.closed_form:
        raise ValueError("closed forms exist only for PurePower offspring with ScaledSibuya immigration")
    if method not in ("closed", "quadrature"):
        raise ValueError(f"unknown method {method!r}")
    return method


def _vectorize(fn):
    """Let a scalar function of (ctx, x, ...) accept arrays in x."""

    def wrapper(ctx, x, *args, **kw):
        if np.ndim(x) == 0:
            return fn(ctx, float(x), *args, **kw)
        arr = np.asarray(x, dtype=float)
        return np.array([fn(ctx, float(v), *args, **kw) for v in arr.ravel()]).reshape(arr.shape)

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# ---------------------------------------------------------------------------
# integrands in z = log x

def _log_excess(model, z):
    """log(f(1 - e^-z) - (1 - e^-z))."""
    off = model.offspring
    out = math.log(off.c) - (1.0 + off.gamma) * z
    if off.family == "LogPower":
        out += math.log1p(off.d * z)
    return out


def _log_gap(model, z):
    """log(1 - g(1 - e^-z))."""
    imm = model.immigration
    return math.log(imm.c_imm) - imm.alpha * z


def _log_dv(model, z):
    """log of dV(e^z)/dz."""
    return -z - _log_excess(model, z)


def _log_h(model, z):
    return _log_gap(model, z) - z - _log_excess(model, z)


def _quad(ctx, fn, a, b):
    """Adaptive quadrature of a positive integrand; relative accuracy ctx.rtol."""
    if b <= a:
        return 0.0
    val, err, *rest = integrate.quad(fn, a, b, epsabs=0.0, epsrel=ctx.rtol, limit=ctx.limit, full_output=1)
    if len(rest) > 1 and err > 100.0 * ctx.rtol * abs(val):
        raise QuadratureError(f"quadrature on [{a:g}, {b:g}] did not converge: value {val:.6g}, error {err:.3g}")
    return val


def _log_integral(ctx, log_f, a, b):
    """log of int_a^b exp(log_f(z)) dz, scaled to avoid overflow."""
    if b <= a:
        return -math.inf
    m = max(log_f(a), log_f(b), log_f(0.5 * (a + b)))
    return m + math.log(_quad(ctx, lambda z: math.exp(log_f(z) - m), a, b))


def _h_integral(ctx, z0, z1):
    """int_{z0}^{z1} h(z) dz."""
    model = ctx.model
    if z1 <= z0:
        return 0.0
    return math.exp(_log_integral(ctx, lambda z: _log_h(model, z), z0, z1))


def _bracket_root(ctx, fn, lo, hi, hi_cap):
    """Root of increasing fn on [lo, inf) with a geometrically grown bracket."""
    while fn(hi) < 0.0:
        lo = hi
        hi = hi * ctx.bracket_growth if hi > 0 else 1.0
        if hi > hi_cap:
            raise OverflowError("root bracket grew beyond x = 1e300")
    return optimize.brentq(fn, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


# ---------------------------------------------------------------------------
# V, W, Psi

def _pick_offspring(ctx, method):
    """V and W only involve the offspring law."""
    power = ctx.model.offspring.family == "PurePower"
    if method == "auto":
        return "closed" if power else "quadrature"
    if method == "closed" and not power:
        raise ValueError("closed-form V and W need PurePower offspring")
    if method not in ("closed", "quadrature"):
        raise ValueError(f"unknown method {method!r}")
    return method


@_vectorize
def v_of_x(ctx, x, method="auto"):
    """V(x) for x >= 1."""
    if x < 1.0:
        raise ValueError("V is defined for x >= 1")
    off = ctx.model.offspring
    if _pick_offspring(ctx, method) == "closed":
        g = off.gamma
        return math.expm1(g * math.log(x)) / (off.c * g)
    if x == 1.0:
        return 0.0
    return math.exp(_log_integral(ctx, lambda z: _log_dv(ctx.model, z), 0.0, math.log(x)))


def _log_w(ctx, y, method):
    off = ctx.model.offspring
    if _pick_offspring(ctx, method) == "closed":
        g = off.gamma
        return math.log1p(off.c * g * y) / g
    if y == 0.0:
        return 0.0
    log_y = math.log(y)

    def gap(z):
        return _log_integral(ctx, lambda u: _log_dv(ctx.model, u), 0.0, z) - log_y if z > 0 else -math.inf

    return _bracket_root(ctx, gap, 0.0, 1.0, MAX_LOG_X)


@_vectorize
def w_of_y(ctx, y, method="auto"):
    """W(y) = V^{-1}(y) for y >= 0."""
    if y < 0.0:
        raise ValueError("W is defined for y >= 0")
    return math.exp(_log_w(ctx, y, method))


def log_w(ctx, y, method="auto"):
    return _log_w(ctx, float(y), method)


@_vectorize
def psi(ctx, x):
    """Psi(x) = 1 / (1 - g(1 - 1/x))."""
    if x < 1.0:
        raise ValueError("Psi is defined for x >= 1")
    return math.exp(-_log_gap(ctx.model, math.log(x)))


@_vectorize
def psi_inv(ctx, y, method="auto"):
    imm = ctx.model.immigration
    if y < 1.0 / imm.c_imm * (1.0 - 1e-12):
        raise ValueError(f"Psi^-1 needs y >= Psi(1) = {1.0 / imm.c_imm}")
    if _pick(ctx, method) == "closed" or imm.family == "Bernoulli":
        return (imm.c_imm * y) ** (1.0 / imm.alpha)
    log_y = math.log(y)
    z = _bracket_root(ctx, lambda z: -_log_gap(ctx.model, z) - log_y, 0.0, 1.0, MAX_LOG_X)
    return math.exp(z)


# ---------------------------------------------------------------------------
# F, q, Q

def _start(one_minus_s):
    """log x0 for x0 = 1 / (1 - s)."""
    return -math.log(one_minus_s)


def _one_minus(s, one_minus_s):
    if one_minus_s is None:
        if s is None:
            raise TypeError("give s or one_minus_s")
        if not (0.0 <= s <= 1.0):
            raise ValueError("s must lie in [0, 1]")
        return 1.0 - s
    if not (0.0 <= one_minus_s <= 1.0):
        raise ValueError("one_minus_s must lie in [0, 1]")
    return one_minus_s


def _log_end(ctx, t, one_minus_s, method):
    """log W(mu t + V(1 / (1 - s)))."""
    z0 = _start(one_minus_s)
    if t == 0.0:
        return z0
    return _log_w(ctx, ctx.model.mu * t + v_of_x(ctx, math.exp(z0), method), method)


def clan_extinction_gap(ctx, t, s=None, *, one_minus_s=None, method="auto"):
    """1 - F(t; s)."""
    u = _one_minus(s, one_minus_s)
    if u == 0.0:
        return 0.0
    return math.exp(-_log_end(ctx, t, u, method))


def F_ts(ctx, t, s=None, *, one_minus_s=None, method="auto"):
    """F(t; s), the generating function of a clan of age t."""
    if t < 0:
        raise ValueError("t must be >= 0")
    return 1.0 - clan_extinction_gap(ctx, t, s, one_minus_s=one_minus_s, method=method)


def q_ts(ctx, t, s=None, *, one_minus_s=None, method="auto"):
    """q(t; s) = 1 - g(F(t; s))."""
    if t < 0:
        raise ValueError("t must be >= 0")
    u = _one_minus(s, one_minus_s)
    if u == 0.0:
        return 0.0
    m = _pick(ctx, method)
    if m == "closed":
        off, imm = ctx.model.offspring, ctx.model.immigration
        a = u ** (-off.gamma) + off.c * off.gamma * ctx.model.mu * t
        return imm.c_imm * a ** (-imm.alpha / off.gamma)
    return math.exp(_log_gap(ctx.model, _log_end(ctx, t, u, m)))


@_vectorize
def q0(ctx, t, method="auto"):
    return q_ts(ctx, t, 0.0, method=method)


def _closed_q_integral(ctx, t, u):
    """int_0^t q(v; s) dv in closed form, with u = 1 - s."""
    off, imm, mu = ctx.model.offspring, ctx.model.immigration, ctx.model.mu
    k = off.c * off.gamma * mu
    beta = imm.alpha / off.gamma
    a = u ** (-off.gamma)
    if abs(beta - 1.0) < 1e-12:
        return imm.c_imm * math.log1p(k * t / a) / k
    # a^(1-beta) * ((1 + k t / a)^(1-beta) - 1) / (k (1 - beta))
    return imm.c_imm * a ** (1.0 - beta) * math.expm1((1.0 - beta) * math.log1p(k * t / a)) / (k * (1.0 - beta))


@_vectorize
def Q_cum(ctx, t, method="auto"):
    """Q(t) = int_0^t q0(u) du."""
    if t < 0:
        raise ValueError("t must be >= 0")
    m = _pick(ctx, method)
    if m == "closed":
        return _closed_q_integral(ctx, t, 1.0)
    return _h_integral(ctx, 0.0, _log_end(ctx, t, 1.0, m)) / ctx.model.mu


def I_conv(ctx, t, s=None, *, one_minus_s=None, method="auto"):
    """I(t; s) = int_0^t r(t - u) q(u; s) du."""
    if t < 0:
        raise ValueError("t must be >= 0")
    u = _one_minus(s, one_minus_s)
    if t == 0.0 or u == 0.0:
        return 0.0
    model = ctx.model
    r = model.intensity
    m = _pick(ctx, method)
    if r.is_constant:
        if m == "closed":
            return r.rho * _closed_q_integral(ctx, t, u)
        z0 = _start(u)
        return r.rho * _h_integral(ctx, z0, _log_end(ctx, t, u, m)) / model.mu
    if m == "closed":
        return _quad(ctx, lambda v: float(r(t - v)) * q_ts(ctx, v, one_minus_s=u, method="closed"), 0.0, t)
    # substitute w = W(mu v + V0): v = (V(w) - V0) / mu
    z0 = _start(u)
    v0 = v_of_x(ctx, math.exp(z0), m)

    def integrand(z):
        age = (v_of_x(ctx, math.exp(z), m) - v0) / model.mu
        return float(r(max(t - age, 0.0))) * math.exp(_log_h(model, z))

    return _quad(ctx, integrand, z0, _log_end(ctx, t, u, m)) / model.mu


def phi(ctx, t, s=None, *, one_minus_s=None, method="auto"):
    """Generating function of the population at time t."""
    return math.exp(-I_conv(ctx, t, s, one_minus_s=one_minus_s, method=method))


@_vectorize
def survival_prob(ctx, t, method="auto"):
    """P(Y(t) > 0)."""
    return -math.expm1(-I_conv(ctx, t, 0.0, method=method))


@_vectorize
def void_prob(ctx, t, method="auto"):
    """P(Y(t) = 0)."""
    return math.exp(-I_conv(ctx, t, 0.0, method=method))


# ---------------------------------------------------------------------------
# finite total mass: Delta and H

def _require_finite_mass(ctx):
    off, imm = ctx.model.offspring, ctx.model.immigration
    if not imm.alpha > off.gamma:
        raise RegimeError("total mass of q diverges unless alpha > gamma")


def delta_s(ctx, s=None, *, one_minus_s=None, method="auto"):
    """Delta(s) = int_0^inf q(t; s) dt."""
    _require_finite_mass(ctx)
    u = _one_minus(s, one_minus_s)
    if u == 0.0:
        return 0.0
    off, imm, mu = ctx.model.offspring, ctx.model.immigration, ctx.model.mu
    excess_exp = imm.alpha - off.gamma
    if _pick(ctx, method) == "closed":
        return imm.c_imm * u**excess_exp / (off.c * mu * excess_exp)
    z0 = _start(u)
    cut = z0 + 40.0 / excess_exp
    # beyond the cutoff h decays like exp(-(alpha - gamma) z) times a slowly varying factor
    tail = math.exp(_log_h(ctx.model, cut)) / excess_exp
    return (_h_integral(ctx, z0, cut) + tail) / mu


def total_mass(ctx, method="auto"):
    """Q = int_0^inf q0(t) dt (finite only when alpha > gamma)."""
    return delta_s(ctx, 0.0, method=method)


def H_pgf(ctx, s=None, *, one_minus_s=None, method="auto"):
    """Limit generating function of Y(t) given Y(t) > 0 when Q is finite."""
    rho = ctx.model.intensity.rho
    q_total = total_mass(ctx, method)
    d = delta_s(ctx, s, one_minus_s=one_minus_s, method=method)
    return 1.0 - math.expm1(-rho * d) / math.expm1(-rho * q_total)


# ---------------------------------------------------------------------------
# slowly varying normalizers

def _closed_log_b(ctx, x):
    off, imm = ctx.model.offspring, ctx.model.immigration
    k = off.c * off.gamma
    beta = imm.alpha / off.gamma
    if abs(beta - 1.0) < 1e-12:
        return imm.c_imm * math.log1p(k * x) / k
    return imm.c_imm * math.expm1((1.0 - beta) * math.log1p(k * x)) / (k * (1.0 - beta))


def log_B(ctx, x, method="auto"):
    """log B(x) with B(x) = exp(int_0^x du / Psi(W(u)))."""
    if x < 0:
        raise ValueError("B is defined for x >= 0")
    m = _pick(ctx, method)
    if m == "closed":
        return _closed_log_b(ctx, x)
    return _h_integral(ctx, 0.0, _log_w(ctx, x, m))


def log_A(ctx, x, method="auto"):
    """log A(x) with A(x) = B(V(x))."""
    if x < 1:
        raise ValueError("A is defined for x >= 1")
    m = _pick(ctx, method)
    if m == "closed":
        return _closed_log_b(ctx, v_of_x(ctx, x, "closed"))
    return _h_integral(ctx, 0.0, math.log(x))


@_vectorize
def B_fn(ctx, x, method="auto"):
    return math.exp(log_B(ctx, x, method))


@_vectorize
def A_fn(ctx, x, method="auto"):
    return math.exp(log_A(ctx, x, method))


def log_A_inv(ctx, log_y, method="auto"):
    """log of A^{-1}(y), given log y >= 0."""
    if log_y < 0:
        raise ValueError("A^-1 needs y >= 1")
    if log_y == 0.0:
        return 0.0
    m = _pick(ctx, method)
    if m == "closed":
        fn = lambda z: _closed_log_b(ctx, v_of_x(ctx, math.exp(z), "closed")) - log_y  # noqa: E731
    else:
        fn = lambda z: _h_integral(ctx, 0.0, z) - log_y  # noqa: E731
    return _bracket_root(ctx, fn, 0.0, 1.0, MAX_LOG_X)


def B_inv_from_log(ctx, log_y, method="auto"):
    """B^{-1}(y) given log y; equals V(A^{-1}(y))."""
    m = _pick(ctx, method)
    return v_of_x(ctx, math.exp(log_A_inv(ctx, log_y, m)), m)


@_vectorize
def B_inv(ctx, y, method="auto"):
    if y < 1.0:
        raise ValueError("B^-1 needs y >= 1")
    return B_inv_from_log(ctx, math.log(y), method)


# ---------------------------------------------------------------------------
# regimes

@dataclass(frozen=True)
class RegimeClass:
    regime: str
    C: float | None = None
    Q: float | None = None
    notes: tuple = field(default_factory=tuple)

    def label(self):
        if self.regime == "II":
            return f"II, C={self.C!r}"
        if self.regime == "III":
            return f"III, Q={self.Q!r}"
        return self.regime


def classify_regime(ctx):
    """Regime of the model from the asymptotics of t q0(t)."""
    model = ctx.model
    off, imm, mu = model.offspring, model.immigration, model.mu
    alpha, gamma = imm.alpha, off.gamma
    notes = []
    if abs(alpha - gamma) <= 1e-12:
        if off.family == "PurePower":
            out = RegimeClass("II", C=imm.c_imm / (off.c * gamma * mu))
        else:
            out = RegimeClass("IV")
    elif alpha < gamma:
        out = RegimeClass("I")
    else:
        out = RegimeClass("III", Q=total_mass(ctx))

    ts = (1e3, 1e4, 1e5)
    tq = [t * q0(ctx, t) for t in ts]
    rising = tq[0] < tq[1] < tq[2]
    falling = tq[0] > tq[1] > tq[2]
    expected = {"I": rising, "II": max(tq) - min(tq) < 0.05 * max(tq), "III": falling, "IV": falling}
    if not expected[out.regime]:
        notes.append("t*q0(t) at t=1e3,1e4,1e5 = " + ", ".join(f"{v:.6g}" for v in tq)
                     + f" does not yet show the trend expected for regime {out.regime}")
    return RegimeClass(out.regime, out.C, out.Q, tuple(notes))
