"""Offspring and immigration laws, immigration intensities, model bundle.

Offspring laws are critical with generating function
``f(s) = s + (1 - s)**(1 + gamma) * L(1 / (1 - s))`` where ``L`` is either a
constant ``c`` (``PurePower``) or ``c * (1 + d * log x)`` (``LogPower``).
Immigration laws have ``1 - g(s) = (1 - s)**alpha * l(1 / (1 - s))`` with a
constant ``l``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy import special

from . import _kernels as K

DEFAULT_TABLE_SIZE = 2**16
DEFAULT_CHECK_TERMS = 10_000


class LawError(ValueError):
    """Raised for parameters outside a law's validity domain."""


@dataclass(frozen=True)
class OffspringLaw:
    family: Literal["PurePower", "LogPower"]
    gamma: float
    c: float
    d: float = 0.0
    table_size: int = DEFAULT_TABLE_SIZE
    check_terms: int = DEFAULT_CHECK_TERMS
    _neg_tail: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        g, c, d = self.gamma, self.c, self.d
        if self.family not in ("PurePower", "LogPower"):
            raise LawError(f"unknown offspring family {self.family!r}")
        if not (0.0 < g <= 1.0):
            raise LawError(f"offspring gamma must satisfy gamma ∈ (0,1], got {g}")
        if not c > 0.0:
            raise LawError(f"offspring scale must satisfy c > 0, got {c}")
        if self.family == "PurePower":
            if d != 0.0:
                raise LawError("PurePower takes no log parameter d")
            if c > 1.0 / (1.0 + g) + 1e-15:
                raise LawError(f"PurePower needs c <= 1/(1+gamma) = {1.0 / (1.0 + g):.6g}, got c = {c}")
        else:
            if not d > 0.0:
                raise LawError(f"LogPower needs d > 0, got {d}")
            p1 = 1.0 - c * (1.0 + g) + c * d
            if p1 < -1e-12:
                raise LawError(f"LogPower needs p1 = 1 - c(1+gamma) + c d >= 0, got {p1:.6g}")
            bad = self._first_negative_coefficient()
            if bad is not None:
                raise LawError(f"LogPower coefficients must be nonnegative; p_{bad} < 0")
        object.__setattr__(self, "_neg_tail", -self.tail(np.arange(self.table_size + 1)))

    @classmethod
    def log_power(cls, gamma=0.5, c=0.4, d=0.25, **kw):
        """LogPower law, lowering ``c`` until valid; returns (law, note)."""
        note = ""
        for _ in range(60):
            try:
                law = cls("LogPower", gamma, c, d, **kw)
            except LawError as err:
                if "p_" in str(err):
                    raise
                c *= 0.9
                note = f"c lowered to {c:.6g} for validity"
                continue
            return law, note
        raise LawError("no valid LogPower scale found")

    def _first_negative_coefficient(self):
        k = np.arange(2, self.check_terms + 1)
        p = self._pmf_from(k)
        neg = np.nonzero(p < -1e-12)[0]
        return int(k[neg[0]]) if neg.size else None

    # generating function -------------------------------------------------

    def slowly_varying(self, x):
        """L(x)."""
        x = np.asarray(x, dtype=float)
        if self.family == "PurePower":
            return np.full_like(x, self.c)
        return self.c * (1.0 + self.d * np.log(x))

    def excess(self, u):
        """f(1 - u) - (1 - u) for u in (0, 1], computed without cancellation."""
        u = np.asarray(u, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = self.c * u ** (1.0 + self.gamma)
            if self.family == "LogPower":
                val = val * (1.0 - self.d * np.log(u))
        return np.where(u > 0.0, val, 0.0)

    def pgf(self, s):
        s = np.asarray(s, dtype=float)
        out = s + self.excess(1.0 - s)
        return out if out.ndim else float(out)

    # distribution --------------------------------------------------------

    def _pmf_from(self, k):
        """p_k for integer k >= 2."""
        k = np.asarray(k, dtype=float)
        g, c, d = self.gamma, self.c, self.d
        if g == 1.0:
            base = np.where(k == 2, 1.0, 0.0)
            if self.family == "PurePower":
                return c * base
            with np.errstate(divide="ignore"):
                logterm = np.where(k == 2, -1.5, 2.0 / (k * (k - 1.0) * np.maximum(k - 2.0, 1.0)))
            return c * base + c * d * logterm
        # C(1+g, k) (-1)^k = g (1+g) Gamma(k-1-g) / (Gamma(1-g) k!), which avoids the pole of Gamma(-1-g)
        coef = g * (1.0 + g) * np.exp(special.gammaln(k - 1.0 - g) - special.gammaln(1.0 - g)
                                      - special.gammaln(k + 1.0))
        if self.family == "PurePower":
            return c * coef
        psi_start = special.digamma(1.0 - g) + 1.0 / (1.0 + g) + 1.0 / g  # digamma(-1-g)
        return c * coef * (1.0 + d * (special.digamma(k - 1.0 - g) - psi_start))

    def pmf(self, kmax):
        k = np.arange(kmax + 1)
        out = np.empty(kmax + 1)
        out[0] = self.c
        if kmax >= 1:
            out[1] = 1.0 - self.c * (1.0 + self.gamma) + self.c * self.d
        if kmax >= 2:
            out[2:] = self._pmf_from(k[2:])
        return out

    def _tail_params(self):
        g = self.gamma
        if g == 1.0:
            if self.family == "PurePower":
                return K.TAIL_NONE, 0.0, 0.0, 0.0, 0.0
            return K.TAIL_LOGPOWER_UNIT, 0.0, math.log(self.c * self.d), 0.0, 0.0
        return (K.TAIL_POWER, g, math.log(self.c * g) - math.lgamma(1.0 - g), self.d,
                float(special.digamma(-g)))

    def tail(self, n):
        """P(xi > n) for integers n >= 0."""
        n = np.atleast_1d(np.asarray(n, dtype=float))
        kind, p0, p1, p2, p3 = self._tail_params()
        if kind == K.TAIL_NONE:
            out = np.where(n < 2, self.c, 0.0)
        else:
            out = np.exp(K.log_tail_many(np.maximum(n, 1.0), kind, p0, p1, p2, p3))
        if kind == K.TAIL_LOGPOWER_UNIT:
            out[(n >= 1) & (n < 2)] = self.c * (1.0 - self.d)
        out[n < 1] = 1.0 - self.c
        return out

    def sampler_args(self):
        """Arguments for the compiled samplers: (neg_tail, kind, p0, p1, p2, p3)."""
        return (self._neg_tail,) + self._tail_params()

    def sample(self, rng):
        return int(K.draw_from_tail_table(rng, *self.sampler_args()))

    def sample_array(self, rng, size):
        return K.draw_many_from_tail_table(rng, size, *self.sampler_args())


@dataclass(frozen=True)
class ImmigrationLaw:
    family: Literal["ScaledSibuya", "Bernoulli"]
    alpha: float
    c_imm: float
    table_size: int = DEFAULT_TABLE_SIZE
    _neg_tail: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.family not in ("ScaledSibuya", "Bernoulli"):
            raise LawError(f"unknown immigration family {self.family!r}")
        if not (0.0 < self.c_imm <= 1.0):
            raise LawError(f"immigration scale must satisfy cImm ∈ (0,1], got {self.c_imm}")
        if self.family == "Bernoulli":
            if self.alpha != 1.0:
                raise LawError("Bernoulli immigration has alpha = 1")
        elif not (0.0 < self.alpha <= 1.0):
            raise LawError(f"immigration alpha must satisfy alpha ∈ (0,1], got {self.alpha}")
        object.__setattr__(self, "_neg_tail", -self.tail(np.arange(self.table_size + 1)))

    @classmethod
    def bernoulli(cls, m):
        return cls("Bernoulli", 1.0, m)

    def tail_gap(self, u):
        """1 - g(1 - u)."""
        u = np.asarray(u, dtype=float)
        return self.c_imm * u**self.alpha

    def pgf(self, s):
        s = np.asarray(s, dtype=float)
        out = 1.0 - self.tail_gap(1.0 - s)
        return out if out.ndim else float(out)

    def pmf(self, kmax):
        out = np.zeros(kmax + 1)
        out[0] = 1.0 - self.c_imm
        if kmax >= 1:
            out[1] = self.c_imm * self.alpha
        if self.family == "ScaledSibuya":
            for k in range(1, kmax):
                out[k + 1] = out[k] * (k - self.alpha) / (k + 1)
        return out

    def _tail_params(self):
        if self.family == "Bernoulli" or self.alpha == 1.0:
            return K.TAIL_NONE, 0.0, 0.0, 0.0, 0.0
        a = self.alpha
        return K.TAIL_SIBUYA, a, math.log(self.c_imm) - math.lgamma(1.0 - a), 0.0, 0.0

    def tail(self, n):
        """P(I > n) for integers n >= 0."""
        n = np.atleast_1d(np.asarray(n, dtype=float))
        kind, p0, p1, p2, p3 = self._tail_params()
        if kind == K.TAIL_NONE:
            out = np.zeros_like(n)
        else:
            out = np.exp(K.log_tail_many(np.maximum(n, 1.0), kind, p0, p1, p2, p3))
        out[n < 1] = self.c_imm
        return out

    def sampler_args(self):
        return (self._neg_tail,) + self._tail_params()

    def sample(self, rng):
        return int(K.draw_from_tail_table(rng, *self.sampler_args()))

    def sample_array(self, rng, size):
        return K.draw_many_from_tail_table(rng, size, *self.sampler_args())


def sibuya(alpha):
    """Unscaled Sibuya law (no mass at zero)."""
    return ImmigrationLaw("ScaledSibuya", alpha, 1.0)


@dataclass(frozen=True)
class Intensity:
    """Immigration intensity r(t).

    ``Constant``: rho; ``ExpApproach``: rho (1 + a exp(-b t));
    ``RationalApproach``: rho t / (1 + t).
    """

    family: Literal["Constant", "ExpApproach", "RationalApproach"]
    rho: float
    a: float = 0.0
    b: float = 1.0

    def __post_init__(self):
        if self.family not in ("Constant", "ExpApproach", "RationalApproach"):
            raise LawError(f"unknown intensity family {self.family!r}")
        if not self.rho > 0.0:
            raise LawError(f"intensity limit must satisfy rho > 0, got {self.rho}")
        if self.family == "ExpApproach":
            if not self.a > -1.0:
                raise LawError(f"ExpApproach needs a > -1 so that r >= 0, got {self.a}")
            if not self.b > 0.0:
                raise LawError(f"ExpApproach needs b > 0, got {self.b}")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("intensity is defined for t >= 0")
        if self.family == "Constant":
            out = np.full_like(t, self.rho)
        elif self.family == "ExpApproach":
            out = self.rho * (1.0 + self.a * np.exp(-self.b * t))
        else:
            out = self.rho * t / (1.0 + t)
        return out if out.ndim else float(out)

    def bound(self, t0, t1):
        """sup of r over [t0, t1]."""
        if self.family == "Constant":
            return self.rho
        if self.family == "ExpApproach":
            return float(self(t0 if self.a >= 0 else t1))
        return float(self(t1)) if math.isfinite(t1) else self.rho

    def cumulative(self, t):
        """Integral of r over [0, t]."""
        t = np.asarray(t, dtype=float)
        if self.family == "Constant":
            out = self.rho * t
        elif self.family == "ExpApproach":
            out = self.rho * (t - self.a * np.expm1(-self.b * t) / self.b)
        else:
            out = self.rho * (t - np.log1p(t))
        return out if out.ndim else float(out)

    @property
    def is_constant(self):
        return self.family == "Constant" or (self.family == "ExpApproach" and self.a == 0.0)


@dataclass(frozen=True)
class ModelSpec:
    mu: float
    offspring: OffspringLaw
    immigration: ImmigrationLaw
    intensity: Intensity

    def __post_init__(self):
        if not self.mu > 0.0:
            raise LawError(f"lifetime rate must satisfy mu > 0, got {self.mu}")

    @property
    def closed_form(self):
        return self.offspring.family == "PurePower" and self.immigration.family == "ScaledSibuya"


# thin functional aliases -------------------------------------------------

def offspring_pgf(law, s):
    return law.pgf(s)


def offspring_pmf(law, kmax):
    return law.pmf(kmax)


def offspring_sample(law, rng):
    return law.sample(rng)


def immigration_pgf(law, s):
    return law.pgf(s)


def immigration_sample(law, rng):
    return law.sample(rng)


def intensity_eval(fn, t):
    return fn(t)


def intensity_bound(fn, t0, t1):
    return fn.bound(t0, t1)
