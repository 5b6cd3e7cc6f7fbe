"""Compiled inner loops of the displacement receiver.

Scalar formulas here mirror the vectorized ones in ``cfsk.receiver``; the
two are checked against each other in the test suite.
"""

import math

import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_CAPPED = 1
STATUS_DEGENERATE = 2

_JIT = dict(cache=True, nogil=True)


@njit(**_JIT)
def sinc(x):
    if abs(x) < 1e-6:
        x2 = x * x
        return 1.0 - x2 / 6.0 + x2 * x2 / 120.0
    return math.sin(x) / x


@njit(**_JIT)
def rate(d, t, dwt, dth, amp, xi):
    return amp * (1.0 - xi * math.cos(d * (dwt * t + dth)))


@njit(**_JIT)
def rate_integral(d, t0, t1, dwt, dth, amp, xi):
    span = t1 - t0
    if span <= 0.0 or amp == 0.0:
        return 0.0
    mid = 0.5 * (t0 + t1)
    # sin(A) - sin(B) = 2 cos((A+B)/2) sin((A-B)/2), stable as d*dwt -> 0
    osc = math.cos(d * (dwt * mid + dth)) * sinc(0.5 * d * dwt * span)
    val = amp * span * (1.0 - xi * osc)
    return val if val > 0.0 else 0.0


@njit(**_JIT)
def next_arrival(gen, d, t0, dwt, dth, amp, xi):
    """Next click time in (t0, 1], or -1.0 if none before the pulse ends."""
    lam_max = amp * (1.0 + xi)
    if lam_max <= 0.0:
        return -1.0
    if d == 0:
        # rate is constant: a single exponential draw is exact
        lam = amp * (1.0 - xi)
        if lam <= 0.0:
            return -1.0
        t = t0 + gen.standard_exponential() / lam
        return t if t <= 1.0 else -1.0
    t = t0
    while True:
        t += gen.standard_exponential() / lam_max
        if t > 1.0:
            return -1.0
        if gen.random() * lam_max < rate(d, t, dwt, dth, amp, xi):
            return t


@njit(**_JIT)
def _argmax(w):
    best = 0
    for j in range(1, w.shape[0]):
        if w[j] > w[best]:
            best = j
    return best


@njit(**_JIT)
def initial_hypothesis(gen, M, h0):
    if h0 >= 0:
        return h0
    h = int(gen.random() * M)
    return h if h < M else M - 1


@njit(**_JIT)
def simulate(gen, m, M, dwt, dth, amp, xi, h0, max_events, arrivals, hyps, logw):
    """One pulse of the adaptive receiver with true symbol ``m``.

    Fills ``arrivals``/``hyps``/``logw`` (log posterior up to a constant) and
    returns ``(decision, n_clicks, status)``.
    """
    h = initial_hypothesis(gen, M, h0)
    for j in range(M):
        logw[j] = 0.0
    hyps[0] = h
    n = 0
    status = STATUS_OK
    t_prev = 0.0
    while True:
        t = next_arrival(gen, h - m, t_prev, dwt, dth, amp, xi)
        if t < 0.0:
            break
        if n >= max_events:
            status |= STATUS_CAPPED
            break
        arrivals[n] = t
        best = -np.inf
        for j in range(M):
            r = rate(h - j, t, dwt, dth, amp, xi)
            if r > 0.0:
                logw[j] += math.log(r) - rate_integral(h - j, t_prev, t, dwt, dth, amp, xi)
            else:
                logw[j] = -np.inf
            if logw[j] > best:
                best = logw[j]
        if best == -np.inf:
            status |= STATUS_DEGENERATE
            for j in range(M):
                logw[j] = 0.0
        else:
            for j in range(M):
                logw[j] -= best
        h = _argmax(logw)
        n += 1
        hyps[n] = h
        t_prev = t
    for j in range(M):
        logw[j] -= rate_integral(h - j, t_prev, 1.0, dwt, dth, amp, xi)
    return _argmax(logw), n, status


@njit(**_JIT)
def run_block(gen, start, n, M, dwt, dth, amp, xi, h0, max_events):
    """Simulate trials ``start .. start+n-1`` with round-robin true symbols."""
    decisions = np.empty(n, np.int64)
    clicks = np.empty(n, np.int64)
    status = np.empty(n, np.int64)
    arrivals = np.empty(max_events)
    hyps = np.empty(max_events + 1, np.int64)
    logw = np.empty(M)
    for i in range(n):
        m = (start + i) % M
        decisions[i], clicks[i], status[i] = simulate(
            gen, m, M, dwt, dth, amp, xi, h0, max_events, arrivals, hyps, logw
        )
    return decisions, clicks, status
