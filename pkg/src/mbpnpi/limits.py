"""Limit laws for the normalized population."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import mpmath
import numpy as np
from scipy import integrate, special


class InversionError(ArithmeticError):
    pass


def stable_lt(alpha, lam):
    """Laplace transform exp(-lam**alpha) of the unit positive stable law."""
    return np.exp(-np.power(lam, alpha))


def regime2_lt(gamma, c_rho, lam):
    """Laplace transform (1 + lam**gamma)**(-c_rho)."""
    return np.power(1.0 + np.power(lam, gamma), -c_rho)


def kanter_log_a(alpha, u):
    """log of Kanter's function on (0, pi).

    If U is uniform on (0, pi) and E unit exponential then
    (a(U) / E)**((1 - alpha) / alpha) has Laplace transform exp(-lam**alpha).
    """
    return (alpha / (1.0 - alpha) * np.log(np.sin(alpha * u)) + np.log(np.sin((1.0 - alpha) * u))
            - np.log(np.sin(u)) / (1.0 - alpha))


def _stable_cdf_integral(alpha, x):
    scale = x ** (-alpha / (1.0 - alpha))
    val, _ = integrate.quad(lambda u: math.exp(-scale * math.exp(kanter_log_a(alpha, u))), 0.0, math.pi,
                            epsabs=1e-13, epsrel=1e-11, limit=400)
    return val / math.pi


def _invert(transform, x, method):
    with mpmath.workdps(30):
        val = float(mpmath.invertlaplace(transform, x, method=method))
    if not math.isfinite(val):
        raise InversionError(f"{method} inversion failed at x={x}")
    return val


def stable_cdf(alpha, x, method="auto"):
    """CDF of the unit positive stable law with index alpha in (0, 1).

    ``auto`` uses the error function for alpha = 1/2 and the single-integral
    representation otherwise; ``talbot`` inverts exp(-lam**alpha)/lam.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("stable_cdf needs alpha in (0, 1)")
    if np.ndim(x):
        return np.array([stable_cdf(alpha, float(v), method) for v in np.ravel(x)]).reshape(np.shape(x))
    if x <= 0.0:
        return 0.0
    if method == "auto":
        if alpha == 0.5:
            return float(special.erfc(0.5 / math.sqrt(x)))
        return _stable_cdf_integral(alpha, x)
    if method == "integral":
        return _stable_cdf_integral(alpha, x)
    if method == "talbot":
        return min(max(_invert(lambda p: mpmath.exp(-(p**alpha)) / p, x, "talbot"), 0.0), 1.0)
    raise ValueError(f"unknown method {method!r}")


def _regime2_mixture_cdf(gamma, c_rho, x):
    # (1 + lam^gamma)^-c_rho = E exp(-lam^gamma G) with G ~ Gamma(c_rho): X = G^(1/gamma) S
    if gamma == 1.0:
        return float(special.gammainc(c_rho, x))

    def integrand(g):
        return math.exp((c_rho - 1.0) * math.log(g) - g - math.lgamma(c_rho)) * stable_cdf(gamma, x * g ** (-1.0 / gamma))

    val, _ = integrate.quad(integrand, 0.0, np.inf, epsabs=1e-12, epsrel=1e-10, limit=400)
    return val


def regime2_cdf(gamma, c_rho, x, method="talbot", check=True):
    """CDF of the law with Laplace transform (1 + lam**gamma)**(-c_rho).

    Inverts (1 - phi(lam)) / lam numerically. With ``check`` a second scheme
    (de Hoog) is run and disagreement beyond 1e-4 raises InversionError.
    ``mixture`` integrates the gamma mixture of stable laws instead.
    """
    if np.ndim(x):
        return np.array([regime2_cdf(gamma, c_rho, float(v), method, check) for v in np.ravel(x)]).reshape(np.shape(x))
    if x <= 0.0:
        return 0.0
    if method == "mixture":
        return _regime2_mixture_cdf(gamma, c_rho, x)

    def tail(p):
        return (1 - (1 + p**gamma) ** (-c_rho)) / p

    out = 1.0 - _invert(tail, x, method)
    if check:
        other = 1.0 - _invert(tail, x, "dehoog" if method != "dehoog" else "talbot")
        if abs(other - out) > 1e-4:
            raise InversionError(f"Laplace inversions disagree at x={x}: {out} vs {other}")
    return min(max(out, 0.0), 1.0)


def regime2_tail_constant(gamma, c_rho):
    """Constant k in 1 - G(x) ~ k x**(-gamma)."""
    return c_rho / math.gamma(1.0 - gamma)


@dataclass(frozen=True)
class LimitLaw:
    kind: Literal["StablePositive", "RegimeII", "ConditionalH", "UniformUnit"]
    alpha: float | None = None
    gamma: float | None = None
    c_rho: float | None = None

    def lt(self, lam):
        if self.kind == "StablePositive":
            return stable_lt(self.alpha, lam)
        if self.kind == "RegimeII":
            return regime2_lt(self.gamma, self.c_rho, lam)
        if self.kind == "UniformUnit":
            lam = np.asarray(lam, dtype=float)
            with np.errstate(invalid="ignore", divide="ignore"):
                out = np.where(lam > 0, -np.expm1(-lam) / np.where(lam > 0, lam, 1.0), 1.0)
            return out if out.ndim else float(out)
        raise NotImplementedError("the conditional law is described by its generating function; see analytic.H_pgf")

    def cdf(self, x):
        if self.kind == "StablePositive":
            return stable_cdf(self.alpha, x)
        if self.kind == "RegimeII":
            return regime2_cdf(self.gamma, self.c_rho, x, method="mixture")
        if self.kind == "UniformUnit":
            return np.clip(x, 0.0, 1.0)
        raise NotImplementedError("the conditional law is described by its generating function; see analytic.H_pgf")
