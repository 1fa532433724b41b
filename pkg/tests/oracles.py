"""Independent oracles used by the test suite.

Everything here is deliberately implemented from first principles, separate
from the package code paths it checks: analytic moments for the samplers, a
high-precision Welch confidence bound via mpmath, a brute-force decodability
closure for video frame groups, and an idealized window-ramp model for bulk
transfer timing.
"""

from __future__ import annotations

import math
from functools import lru_cache

import mpmath as mp
from scipy.stats import norm


# ---------------------------------------------------------------------------
# analytic distribution moments


def trunc_lognormal_mean_oracle(mu, sigma, upper):
    """E[X | X <= upper] for X ~ Lognormal(mu, sigma)."""
    ln_u = math.log(upper)
    num = norm.cdf((ln_u - mu - sigma**2) / sigma)
    den = norm.cdf((ln_u - mu) / sigma)
    return math.exp(mu + 0.5 * sigma**2) * num / den


def lognormal_mean_oracle(mu, sigma):
    return math.exp(mu + 0.5 * sigma**2)


# ---------------------------------------------------------------------------
# Welch one-sided confidence bound, high precision


def _student_t_cdf(x, df):
    """Student-t CDF via the regularized incomplete beta function."""
    x = mp.mpf(x)
    df = mp.mpf(df)
    z = df / (df + x * x)
    ib = mp.betainc(df / 2, mp.mpf(1) / 2, 0, z, regularized=True)
    if x >= 0:
        return 1 - ib / 2
    return ib / 2


def _student_t_ppf(p, df):
    """Quantile by Newton iteration on the CDF (analytic pdf derivative)."""
    p = mp.mpf(p)
    df = mp.mpf(df)

    def pdf(x):
        return (
            mp.gamma((df + 1) / 2)
            / (mp.sqrt(df * mp.pi) * mp.gamma(df / 2))
            * (1 + x * x / df) ** (-(df + 1) / 2)
        )

    # Cornish-Fisher-ish start from the normal quantile.
    x = mp.sqrt(2) * mp.erfinv(2 * p - 1)
    for _ in range(60):
        err = _student_t_cdf(x, df) - p
        step = err / pdf(x)
        x = x - step
        if abs(step) < mp.mpf(10) ** (-(mp.mp.dps - 5)):
            break
    return x


def welch_bound_oracle(candidate, reference, alpha=0.05, direction="lower_is_better"):
    """One-sided (1-alpha) confidence bound on mean(candidate)-mean(reference).

    Returns the upper bound for lower-is-better measures and the lower bound
    for higher-is-better ones, matching the non-inferiority rejection rule.
    """
    with mp.workdps(40):
        c = [mp.mpf(repr(v)) for v in candidate]
        r = [mp.mpf(repr(v)) for v in reference]
        nc, nr = len(c), len(r)
        mc = mp.fsum(c) / nc
        mr = mp.fsum(r) / nr
        vc = mp.fsum((x - mc) ** 2 for x in c) / (nc - 1)
        vr = mp.fsum((x - mr) ** 2 for x in r) / (nr - 1)
        a_, b_ = vc / nc, vr / nr
        se = mp.sqrt(a_ + b_)
        df = (a_ + b_) ** 2 / (a_**2 / (nc - 1) + b_**2 / (nr - 1))
        t = _student_t_ppf(1 - mp.mpf(repr(alpha)), df)
        diff = mc - mr
        if direction == "lower_is_better":
            bound = diff + t * se
        else:
            bound = diff - t * se
        return float(bound)


# ---------------------------------------------------------------------------
# brute-force decodability closure for a frame group


def decodable_count_bruteforce(types, received, next_anchor_received=None):
    """Count decodable frames by explicit dependency-graph reachability.

    ``types`` is the display-order list of 'I'/'P'/'B' for one group;
    ``received`` a same-length bool list. ``next_anchor_received`` is the
    reception status of the first anchor after the group (None = stream end,
    in which case trailing B frames have no forward dependency).
    """
    n = len(types)
    deps = []
    for i, t in enumerate(types):
        d = []
        if t in ("P", "B"):
            for j in range(i - 1, -1, -1):
                if types[j] in ("I", "P"):
                    d.append(j)
                    break
        if t == "B":
            nxt = None
            for j in range(i + 1, n):
                if types[j] in ("I", "P"):
                    nxt = j
                    break
            if nxt is not None:
                d.append(nxt)
            elif next_anchor_received is not None:
                d.append("next")  # sentinel: the anchor following the group
        deps.append(d)

    @lru_cache(maxsize=None)
    def ok(i):
        if i == "next":
            # An anchor outside the group is an I frame: decodable iff received.
            return bool(next_anchor_received)
        if not received[i]:
            return False
        return all(ok(j) for j in deps[i])

    count = sum(1 for i in range(n) if ok(i))
    ok.cache_clear()
    return count


# ---------------------------------------------------------------------------
# idealized congestion-window ramp model for bulk transfer timing


def window_ramp_transfer_time(size_bytes, mss, rate_bps, rtt, overhead=66):
    """Rough transfer time: doubling window per round until the path is full,
    then capacity-limited. Good to ~15-20%, which is what it is used for."""
    wire_per_seg = mss + overhead
    seg_time = wire_per_seg * 8.0 / rate_bps
    bdp_segs = max(1.0, rtt / seg_time)
    sent = 0.0
    t = 0.0
    w = 1.0
    total_segs = math.ceil(size_bytes / mss)
    while sent < total_segs:
        if w >= bdp_segs:
            # path saturated: remaining segments at line rate
            t += (total_segs - sent) * seg_time
            sent = total_segs
            break
        t += rtt + seg_time
        sent += w
        w *= 2.0
    return t
