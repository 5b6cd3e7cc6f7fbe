"""Receiver invariant checks shared by the unit tests and the acceptance gate.

Each check is cached so a session computes it once.
"""

from functools import lru_cache

import numba
import numpy as np
from scipy.stats import kstest

from cfsk import _kernel
from cfsk.alphabet import TWO_PI, Constellation, ProtocolParams
from cfsk.bounds import helstrom
from cfsk.receiver import (
    Posterior, ReceiverModel, bayes_click_update, bayes_final_update, estimate_ser, rate_integral,
    sample_next_arrival,
)


def random_setup(rng, max_M=16, max_nbar=10.0):
    M = int(rng.integers(2, max_M + 1))
    p = ProtocolParams(M, rng.uniform(0, max_nbar), rng.uniform(0, 2 * TWO_PI), rng.uniform(0, TWO_PI))
    r = ReceiverModel(rng.uniform(0.9, 1.0), rng.uniform(0.5, 1.0), rng.uniform(0.9, 1.0))
    return p, r


@lru_cache(maxsize=None)
def posterior_normalization(trials=100_000, seed=101):
    """Largest |sum(weights) - 1| over every update of ``trials`` randomized pulses."""
    rng = np.random.default_rng(seed)
    worst, updates = 0.0, 0
    for _ in range(trials):
        p, r = random_setup(rng)
        m = int(rng.integers(p.M))
        h = int(rng.integers(p.M))
        post, t_prev = Posterior.uniform(p.M), 0.0
        while (t := sample_next_arrival(m, h, t_prev, p, r, rng)) is not None:
            post = bayes_click_update(post, h, t_prev, t, p, r)
            worst = max(worst, abs(post.weights.sum() - 1.0))
            updates += 1
            h, t_prev = post.argmax(), t
        post = bayes_final_update(post, h, t_prev, p, r)
        worst = max(worst, abs(post.weights.sum() - 1.0))
        updates += 1
    return worst, updates


HB_FLOOR_CASES = [
    (ProtocolParams.psk(2, 0.5), ReceiverModel.ideal()),
    (ProtocolParams.psk(16, 8.0), ReceiverModel()),
    (ProtocolParams(4, 1.0, 3.0, 1.0), ReceiverModel.ideal()),
    (ProtocolParams(16, 4.0, 1.85 * np.pi, 0.0625 * np.pi), ReceiverModel.ideal()),
    (ProtocolParams(16, 8.0, 1.85 * np.pi, 0.0625 * np.pi), ReceiverModel(0.985, 0.7)),
    (ProtocolParams(8, 2.0, 0.9 * np.pi, 0.3), ReceiverModel(0.99, 0.9, initial_hypothesis="random")),
]


@lru_cache(maxsize=None)
def hb_floor(trials=200_000, seed=202):
    """(SER, HB, sigma) per case; HB taken at the detected energy eta * tau * n."""
    out = []
    for k, (p, r) in enumerate(HB_FLOOR_CASES):
        est = estimate_ser(p, r, trials, seed + k)
        n_det = p.n_bar * r.efficiency * r.transmittance
        hb = helstrom(Constellation.cfsk(p.M, n_det, p.delta_omega_T, p.delta_theta)).p_error
        out.append((est.p_hat, hb, est.sigma))
    return out


@numba.njit
def _count_events(gen, pulses, d, dwt, dth, amp, xi):
    counts = np.zeros(pulses, np.int64)
    for i in range(pulses):
        t = 0.0
        while True:
            t = _kernel.next_arrival(gen, d, t, dwt, dth, amp, xi)
            if t < 0.0:
                break
            counts[i] += 1
    return counts


@lru_cache(maxsize=None)
def sampler_counts(sets=20, pulses=100_000, seed=303):
    """Largest |z| of mean event count per pulse against the integrated rate."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(sets):
        p, r = random_setup(rng)
        d = int(rng.integers(-p.M + 1, p.M))
        gen = np.random.default_rng(int(rng.integers(2**32)))
        counts = _count_events(gen, pulses, d, p.delta_omega_T, p.delta_theta, r.amplitude(p.n_bar), r.visibility)
        lam = rate_integral(0, d, 0.0, 1.0, p, r)
        if lam == 0.0:
            assert counts.sum() == 0
            continue
        worst = max(worst, abs(counts.mean() - lam) / np.sqrt(lam / pulses))
    return worst


def _gaps_across_pulses(d, p, r, rng, pulses):
    """Interarrival gaps of the concatenated process over consecutive pulses."""
    times = []
    for k in range(pulses):
        t = 0.0
        while (t := sample_next_arrival(0, d, t, p, r, rng)) is not None:
            times.append(k + t)
    return np.diff(times)


@lru_cache(maxsize=None)
def sampler_ks(seed=404):
    """KS p-values: homogeneous gaps against the exponential law, then
    first-arrival times against the exact conditional law for varying rates."""
    rng = np.random.default_rng(seed)
    pvals = []
    # constant rates: d = 0 (direct draw) and dwt = 0 with d != 0 (thinning path)
    for d, p, r in [
        (0, ProtocolParams(4, 3.0), ReceiverModel(visibility=0.6)),
        (2, ProtocolParams(4, 1.5, 0.0, 0.7), ReceiverModel.ideal(visibility=0.9)),
    ]:
        lam = rate_integral(0, d, 0.0, 1.0, p, r)
        gaps = _gaps_across_pulses(d, p, r, rng, 4000)
        pvals.append(kstest(gaps, "expon", args=(0, 1 / lam)).pvalue)
    for d, t0, p in [(1, 0.0, ProtocolParams(16, 2.0, 5.8, 0.2)), (-3, 0.3, ProtocolParams(8, 4.0, 2.5, 1.0))]:
        r = ReceiverModel()
        tot = rate_integral(0, d, t0, 1.0, p, r)
        cdf = lambda t: -np.expm1(-rate_integral(0, d, t0, t, p, r)) / -np.expm1(-tot)
        draws = [sample_next_arrival(0, d, t0, p, r, rng) for _ in range(20_000)]
        pvals.append(kstest([t for t in draws if t is not None], cdf).pvalue)
    return pvals


@lru_cache(maxsize=None)
def additivity(samples=20_000, seed=505):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        p, r = random_setup(rng, max_nbar=20.0)
        m, h = rng.integers(p.M, size=2)
        a, b, c = np.sort(rng.uniform(0, 1, 3))
        lhs = rate_integral(m, h, a, c, p, r)
        rhs = rate_integral(m, h, a, b, p, r) + rate_integral(m, h, b, c, p, r)
        worst = max(worst, abs(lhs - rhs))
    return worst


@lru_cache(maxsize=None)
def thread_determinism(trials=50_000, seed=606):
    p = ProtocolParams(16, 8.0, 1.85 * np.pi, 0.0625 * np.pi)
    r = ReceiverModel(initial_hypothesis="random")
    results = [estimate_ser(p, r, trials, seed, threads=n) for n in (1, 3, 8)]
    return all(x == results[0] for x in results)
