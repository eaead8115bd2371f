"""Exact samplers for the population of clans with PurePower offspring.

For ``f(s) = s + c (1 - s)**(1 + gamma)`` a clan of age ``a`` has
``1 - F(a; s) = ((1 - s)**-gamma + K)**(-1/gamma)`` with ``K = c gamma mu a``.
Both ``theta -> ((theta**-gamma + K)**(-1/gamma))`` and its powers of order
``alpha/gamma <= 1`` are Bernstein functions, so clan and batch sizes are
mixed Poisson laws whose mixing measures are built from positive stable and
gamma variables. The samplers below draw from those mixtures directly, which
costs O(1) per clan instead of one event per branching.

Counts that may exceed int64 are returned as Python ints.
"""

from __future__ import annotations

import math

import numpy as np

from .limits import kanter_log_a

POISSON_DIRECT_MAX = 1.0e15
SUM_CHUNK = 1_000_000


# ---------------------------------------------------------------------------
# stable variables

def _kanter_uniform(rng, size):
    return math.pi * (1.0 - rng.random(size))


def log_positive_stable(rng, alpha, size):
    """log S with E exp(-lam S) = exp(-lam**alpha)."""
    if alpha == 1.0:
        return np.zeros(size)
    u = _kanter_uniform(rng, size)
    e = rng.standard_exponential(size)
    return (1.0 - alpha) / alpha * (kanter_log_a(alpha, u) - np.log(e))


def log_tilted_stable(rng, alpha, size):
    """log S' where S' has the law of S weighted by 1/S (then normalized).

    With S = (a(U)/E)**((1-alpha)/alpha), weighting by 1/S turns E into a
    Gamma(1/alpha) variable and U into a variable with density proportional to
    a(u)**(-(1-alpha)/alpha); the latter is drawn by rejection against the
    uniform law since a increases from a(0+) = alpha**(alpha/(1-alpha)) (1-alpha).
    """
    if alpha == 1.0:
        return np.zeros(size)
    k = (1.0 - alpha) / alpha
    log_a0 = alpha / (1.0 - alpha) * math.log(alpha) + math.log1p(-alpha)
    u = np.empty(size)
    todo = np.arange(size)
    while todo.size:
        cand = _kanter_uniform(rng, todo.size)
        w = rng.random(todo.size)
        ok = np.log(w) < -k * (kanter_log_a(alpha, cand) - log_a0)
        u[todo[ok]] = cand[ok]
        todo = todo[~ok]
    g = rng.standard_gamma(1.0 / alpha, size)
    return k * (kanter_log_a(alpha, u) - np.log(g))


# ---------------------------------------------------------------------------
# Poisson counts with huge means

def _binomial_big(rng, n, p):
    """Binomial(n, p) for a Python int n, by splitting on order statistics."""
    acc = 0
    while n > 2**62:
        k = (n + 1) // 2
        b = rng.beta(float(k), float(n + 1 - k))
        if b <= p:
            acc += k
            n -= k
            p = (p - b) / (1.0 - b)
        else:
            n = k - 1
            p = p / b
    return acc + int(rng.binomial(n, min(max(p, 0.0), 1.0)))


def binomial_int(rng, n, p):
    n = int(n)
    if n <= 2**62:
        return int(rng.binomial(n, p))
    return _binomial_big(rng, n, p)


def _poisson_big(rng, lam):
    """Poisson(lam) for lam beyond the direct sampler's range (gamma splitting)."""
    acc = 0
    while lam > POISSON_DIRECT_MAX:
        m = int(lam * 0.875)
        g = rng.standard_gamma(float(m))
        if g > lam:
            return acc + _binomial_big(rng, m - 1, lam / g)
        acc += m
        lam -= g
    return acc + int(rng.poisson(lam))


def _int_sum(counts):
    counts = np.asarray(counts)
    if counts.size == 0:
        return 0
    if float(counts.max()) * counts.size < 9.0e18:
        return int(counts.sum())
    return sum(counts.tolist())


def poisson_sum(rng, lam):
    """Sum of independent Poisson(lam_i) counts, exact as a Python int."""
    lam = np.asarray(lam, dtype=float)
    small = lam <= POISSON_DIRECT_MAX
    total = _int_sum(rng.poisson(lam[small]))
    for x in lam[~small]:
        total += _poisson_big(rng, float(x))
    return total


def zero_truncated_poisson_sum(rng, lam):
    """Sum of independent Poisson(lam_i) counts each conditioned to be >= 1.

    The first point of a unit Poisson process on [0, lam] given that there is
    one has a truncated exponential law; the rest is Poisson(lam - first).
    """
    lam = np.asarray(lam, dtype=float)
    if lam.size == 0:
        return 0
    first = -np.log1p(rng.random(lam.size) * np.expm1(-lam))
    return lam.size + poisson_sum(rng, np.maximum(lam - first, 0.0))


# ---------------------------------------------------------------------------
# clans

def clan_survival(gamma, k):
    """P(clan alive) = (1 + K)**(-1/gamma) for K = c gamma mu a."""
    return np.power(1.0 + np.asarray(k, dtype=float), -1.0 / gamma)


def _clan_mixing(rng, gamma, k):
    """Mixing intensities y, one per entry of k, for clans conditioned alive.

    A clan alive at K is ZTPoisson(y) with y drawn from (1 - e^-y) m(dy), where
    y m(dy) is the law of K**(1/gamma) G**(1/gamma) S, G ~ Gamma(1 + 1/gamma).
    For K >= 1 the proposal is m normalized (law of K**(1/gamma) E**(1/gamma) S',
    acceptance 1 - e^-y); for K < 1 it is y m(dy) (acceptance (1 - e^-y)/y).
    """
    k = np.asarray(k, dtype=float)
    out = np.empty(k.size)
    log_kappa = np.log(k) / gamma
    todo = np.arange(k.size)
    while todo.size:
        big = k[todo] >= 1.0
        ib, isml = todo[big], todo[~big]
        log_y = np.empty(todo.size)
        nb = ib.size
        if nb:
            log_y[:nb] = log_kappa[ib] + np.log(rng.standard_exponential(nb)) / gamma + log_tilted_stable(rng, gamma, nb)
        ns = isml.size
        if ns:
            log_y[nb:] = (log_kappa[isml] + np.log(rng.standard_gamma(1.0 + 1.0 / gamma, ns)) / gamma
                          + log_positive_stable(rng, gamma, ns))
        order = np.concatenate([ib, isml])
        y = np.exp(log_y)
        acc = -np.expm1(-y)
        acc[nb:] /= y[nb:]
        ok = rng.random(todo.size) < acc
        out[order[ok]] = y[ok]
        todo = np.sort(order[~ok])
    return out


def alive_clan_sum(rng, gamma, k):
    """Total size of independent clans conditioned alive, one per entry of k."""
    k = np.asarray(k, dtype=float)
    total = 0
    for start in range(0, k.size, SUM_CHUNK):
        part = k[start:start + SUM_CHUNK]
        fresh = part <= 0.0  # age zero: the founder alone
        total += int(fresh.sum())
        part = part[~fresh]
        if gamma == 1.0:
            total += _int_sum(rng.geometric(1.0 / (1.0 + part)))
        else:
            total += zero_truncated_poisson_sum(rng, _clan_mixing(rng, gamma, part))
    return total


# ---------------------------------------------------------------------------
# batches of immigrants

MAX_EXPECTED_TRIALS = 1.0e6


def batch_sum_survivors(rng, gamma, k, immigration, sibuya_law):
    """Total population from batches of immigrants with ages giving k.

    Immigrant clans survive independently with probability p, so the number
    of survivors of a batch has generating function g(1 - p + p z): scaled
    Sibuya with scale c_imm p**alpha, or Bernoulli(m p).
    """
    k = np.asarray(k, dtype=float)
    p = clan_survival(gamma, k)
    if immigration.family == "Bernoulli":
        survivors = (rng.random(k.size) < immigration.c_imm * p).astype(np.int64)
    else:
        hit = rng.random(k.size) < immigration.c_imm * p**immigration.alpha
        survivors = np.zeros(k.size, dtype=object)
        if hit.any():
            draws = sibuya_law.sample_array(rng, int(hit.sum()))
            survivors[hit] = [int(v) for v in draws]
    total = 0
    for kk, m in zip(k, survivors):
        m = int(m)
        while m > 0:
            step = min(m, SUM_CHUNK)
            total += alive_clan_sum(rng, gamma, np.full(step, kk))
            m -= step
    return total


def _batch_mixing_log(rng, gamma, log_kappa, j_law, size):
    """log of kappa * Gamma(J)**(1/gamma) * S with J Sibuya(beta) (J = 1 for beta = 1)."""
    if j_law is None:
        shape = np.ones(size)
    else:
        shape = j_law.sample_array(rng, size)
    return log_kappa + np.log(rng.standard_gamma(shape)) / gamma + log_positive_stable(rng, gamma, size)


def batch_sum_mixture(rng, gamma, k, immigration, j_law, sibuya_law):
    """Total population from batches of ScaledSibuya(alpha) immigrants, alpha <= gamma.

    With beta = alpha/gamma the batch generating function is
    1 - c_imm ((1 - s)**-gamma + K)**(-beta), and (theta**-gamma + K)**(-beta)
    is the Laplace exponent of a Levy measure of mass K**-beta equal to
    K**-beta times the law of K**(1/gamma) Gamma(J)**(1/gamma) S. A batch is
    therefore Poisson(y) with y from c_imm times that measure (plus an atom at
    0) when c_imm K**-beta <= 1; otherwise it is nonzero with probability
    c_imm (1 + K)**-beta and then ZTPoisson(y) with y drawn by rejection.
    Batches whose rejection step would be too slow fall back on survivors.
    """
    c_imm = immigration.c_imm
    beta = immigration.alpha / gamma
    k = np.asarray(k, dtype=float)
    with np.errstate(divide="ignore"):
        mass = c_imm * np.power(k, -beta)
        acc_rate = np.power(k / (1.0 + k), beta)
    direct = mass <= 1.0
    slow = ~direct & (acc_rate * MAX_EXPECTED_TRIALS < 1.0)
    u = rng.random(k.size)
    total = 0

    d_idx = np.nonzero(direct & (u < mass))[0]
    if d_idx.size:
        log_x = _batch_mixing_log(rng, gamma, np.log(k[d_idx]) / gamma, j_law, d_idx.size)
        total += poisson_sum(rng, np.exp(log_x))

    thin = ~direct & ~slow
    t_idx = np.nonzero(thin & (u < c_imm * np.power(1.0 + k, -beta)))[0]
    if t_idx.size:
        y = np.empty(t_idx.size)
        for pos, i in enumerate(t_idx):
            chunk = int(min(max(16.0, 2.0 / acc_rate[i]), 65536.0))
            log_kappa = math.log(k[i]) / gamma
            while True:
                x = np.exp(_batch_mixing_log(rng, gamma, log_kappa, j_law, chunk))
                ok = rng.random(chunk) < -np.expm1(-x)
                if ok.any():
                    y[pos] = x[np.argmax(ok)]
                    break
        total += zero_truncated_poisson_sum(rng, y)

    s_idx = np.nonzero(slow)[0]
    if s_idx.size:
        total += batch_sum_survivors(rng, gamma, k[s_idx], immigration, sibuya_law)
    return total
