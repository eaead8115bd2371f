"""Compiled scalar kernels shared by the laws and the simulator.

Everything here works on plain floats/arrays so it can be called from numba
code and from Python alike. Integer-valued quantities that may exceed 2**53
are carried as float64 "integers"; callers convert to Python ints.
"""

import math

import numpy as np
from numba import njit

# tail kinds understood by ``log_tail``
TAIL_POWER = 0  # offspring law with power (and optional log) tail, gamma < 1
TAIL_LOGPOWER_UNIT = 1  # log-power offspring law with gamma == 1
TAIL_SIBUYA = 2  # Sibuya law, P(I > n)
TAIL_NONE = 3  # finite support fully covered by the table

_ASYMPTOTIC_FROM = 1.0e4


@njit(cache=True)
def log_gamma_ratio(z, h):
    """ln Gamma(z + h) - ln Gamma(z) for z > 0, accurate for huge z."""
    if z < _ASYMPTOTIC_FROM:
        return math.lgamma(z + h) - math.lgamma(z)
    h2 = h * h
    h3 = h2 * h
    h4 = h3 * h
    t1 = (h2 - h) / (2.0 * z)
    t2 = -(h3 - 1.5 * h2 + 0.5 * h) / (6.0 * z * z)
    t3 = (h4 - 2.0 * h3 + h2) / (12.0 * z * z * z)
    return h * math.log(z) + t1 + t2 + t3


@njit(cache=True)
def digamma(x):
    """Digamma for x > 0."""
    acc = 0.0
    while x < 8.0:
        acc -= 1.0 / x
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    series = inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 / 132.0))))
    return acc + math.log(x) - 0.5 * inv - series


@njit(cache=True)
def log_tail(n, kind, p0, p1, p2, p3):
    """log P(X > n) for n >= 1.

    Parameters by kind:
      TAIL_POWER: p0 = gamma, p1 = log(c * gamma) - lgamma(1 - gamma),
                  p2 = d, p3 = digamma(-gamma)
      TAIL_LOGPOWER_UNIT: p1 = log(c * d)
      TAIL_SIBUYA: p0 = alpha, p1 = log(scale) - lgamma(1 - alpha)
    """
    if kind == TAIL_POWER:
        g = p0
        # Gamma(n - g) / Gamma(n + 1), written so that n - g keeps full precision as g -> 1
        out = p1 - log_gamma_ratio(n - g, 1.0 + g)
        if p2 != 0.0:
            out += math.log1p(p2 * (digamma(n - g) - p3))
        return out
    if kind == TAIL_LOGPOWER_UNIT:
        if n < 2.0:
            return -np.inf
        return p1 - math.log(n) - math.log(n - 1.0)
    if kind == TAIL_SIBUYA:
        return p1 + log_gamma_ratio(n + 1.0, -p0)
    return -np.inf


@njit(cache=True)
def log_tail_many(n, kind, p0, p1, p2, p3):
    out = np.empty(n.size)
    for i in range(n.size):
        out[i] = log_tail(n[i], kind, p0, p1, p2, p3)
    return out


@njit(cache=True)
def invert_tail(logv, start, kind, p0, p1, p2, p3):
    """Smallest integer n > start with log P(X > n) < logv."""
    lo = start
    hi = max(2.0 * start, start + 1.0)
    while log_tail(hi, kind, p0, p1, p2, p3) >= logv:
        lo = hi
        hi *= 2.0
        if hi > 1.0e300:
            return hi
    # invariant: tail(lo) >= v > tail(hi)
    while hi - lo > 1.0 and hi - lo > hi * 4.0e-16:
        mid = math.floor(0.5 * (lo + hi))
        if mid <= lo or mid >= hi:
            break
        if log_tail(mid, kind, p0, p1, p2, p3) >= logv:
            lo = mid
        else:
            hi = mid
    return hi


@njit(cache=True)
def draw_from_tail_table(rng, neg_tail, kind, p0, p1, p2, p3):
    """One draw by inversion of the survival function.

    ``neg_tail[k] = -P(X > k)`` for k = 0..K (nondecreasing); beyond K the
    analytic tail is inverted.
    """
    v = 1.0 - rng.random()
    k = np.searchsorted(neg_tail, -v, side="right")
    if k < neg_tail.shape[0]:
        return float(k)
    return invert_tail(math.log(v), float(neg_tail.shape[0] - 1), kind, p0, p1, p2, p3)


@njit(cache=True)
def draw_many_from_tail_table(rng, size, neg_tail, kind, p0, p1, p2, p3):
    out = np.empty(size, dtype=np.float64)
    for i in range(size):
        out[i] = draw_from_tail_table(rng, neg_tail, kind, p0, p1, p2, p3)
    return out


@njit(cache=True)
def clan_path(rng, mu, duration, neg_tail, kind, p0, p1, p2, p3, max_events, max_pop):
    """Continuous-time clan started by one particle.

    Returns (size, events, truncated). Truncation happens when the event or
    population cap is hit; the size at that moment is returned.
    """
    n = 1
    t = 0.0
    events = 0
    while n > 0:
        t += rng.exponential(1.0 / (mu * n))
        if t > duration:
            return n, events, False
        if events >= max_events:
            return n, events, True
        xi = draw_from_tail_table(rng, neg_tail, kind, p0, p1, p2, p3)
        n += int(xi) - 1
        events += 1
        if n > max_pop:
            return n, events, True
    return 0, events, False


@njit(cache=True)
def clans_total(rng, count, conditioned, mu, duration, neg_tail, kind, p0, p1, p2, p3,
                max_events_per_clan, max_pop, budget):
    """Total size of ``count`` independent clans of a common age.

    With ``conditioned`` each clan is redrawn until it is alive at
    ``duration``. ``budget`` bounds the events spent by this call; once it is
    gone every clan not yet finished contributes 1 (alive clans are at least
    that large) and the result is flagged as truncated.

    Returns (total, events_used, truncated).
    """
    total = 0
    used = 0
    truncated = False
    for i in range(count):
        while True:
            left = budget - used
            if left <= 0:
                truncated = True
                if conditioned:
                    total += count - i
                return total, used, truncated
            cap = min(max_events_per_clan, left)
            size, ev, trunc = clan_path(rng, mu, duration, neg_tail, kind, p0, p1, p2, p3, cap, max_pop)
            used += ev
            if trunc:
                truncated = True
                total += max(size, 1)
                break
            if size > 0 or not conditioned:
                total += size
                break
    return total, used, truncated
