"""Adaptive, time-resolved displacement receiver.

The receiver displaces the input by its current hypothesis ``h`` and counts
photons. For true symbol ``m`` the detector sees an inhomogeneous Poisson
process with rate

    2 * eta * tau * n_bar * (1 - xi * cos((h - m) * (dwt * t + dtheta)))

on the unit pulse interval. Each click updates the posterior over symbols
with the click-time likelihood and the survival probability since the
previous click; the displacement then switches to the posterior mode.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from cfsk import _kernel
from cfsk._stats import wilson_ci
from cfsk.alphabet import ProtocolParams

RANDOM = "random"
BLOCK_SIZE = 1024
THREADS_ENV = "CFSK_THREADS"


class DegeneratePosteriorWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class ReceiverModel:
    """Physical imperfections and policies of the receiver.

    ``initial_hypothesis`` is either a symbol index or ``"random"`` (uniform
    draw per pulse). ``transmittance`` is the signal tap of the displacement
    beamsplitter and scales the detected photon number together with
    ``efficiency``.
    """

    visibility: float = 1.0
    efficiency: float = 1.0
    transmittance: float = 0.99
    initial_hypothesis: int | str = 0
    max_events: int = 10_000
    dark_count_rate: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.visibility <= 1.0:
            raise ValueError(f"visibility must be in [0, 1], got {self.visibility}")
        if not 0.0 < self.efficiency <= 1.0:
            raise ValueError(f"efficiency must be in (0, 1], got {self.efficiency}")
        if not 0.0 < self.transmittance <= 1.0:
            raise ValueError(f"transmittance must be in (0, 1], got {self.transmittance}")
        if self.max_events < 1:
            raise ValueError("max_events must be >= 1")
        if self.initial_hypothesis != RANDOM and (
            isinstance(self.initial_hypothesis, str) or int(self.initial_hypothesis) < 0
        ):
            raise ValueError(f"bad initial_hypothesis {self.initial_hypothesis!r}")
        if self.dark_count_rate != 0.0:
            raise NotImplementedError("dark counts are not modeled")

    @classmethod
    def ideal(cls, **overrides) -> "ReceiverModel":
        return cls(**{"visibility": 1.0, "efficiency": 1.0, "transmittance": 1.0, **overrides})

    def amplitude(self, n_bar: float) -> float:
        """Prefactor 2*eta*tau*n_bar of the detected rate."""
        return 2.0 * self.efficiency * self.transmittance * n_bar

    def _h0_code(self, M: int) -> int:
        if self.initial_hypothesis == RANDOM:
            return -1
        h0 = int(self.initial_hypothesis)
        if h0 >= M:
            raise ValueError(f"initial hypothesis {h0} outside alphabet of size {M}")
        return h0


@dataclass(frozen=True)
class Posterior:
    weights: np.ndarray

    @classmethod
    def uniform(cls, M: int) -> "Posterior":
        return cls(np.full(M, 1.0 / M))

    @property
    def M(self) -> int:
        return len(self.weights)

    def argmax(self) -> int:
        # np.argmax returns the first maximum: ties go to the lowest index
        return int(np.argmax(self.weights))


@dataclass
class TrialRecord:
    true_symbol: int
    arrivals: list[float]
    hypotheses: list[int]
    final_posterior: Posterior
    decision: int
    capped: bool = False


@dataclass(frozen=True)
class SerEstimate:
    errors: int
    trials: int
    p_hat: float
    ci95: tuple[float, float]
    capped: int = 0
    degenerate: int = 0

    @property
    def sigma(self) -> float:
        p = self.p_hat if self.errors else 1.0 / self.trials
        return float(np.sqrt(p * (1 - p) / self.trials))


def displaced_rate(m, h, t, p: ProtocolParams, r: ReceiverModel):
    """Instantaneous detected photon rate (per unit pulse time)."""
    d = np.asarray(h) - np.asarray(m)
    amp = r.amplitude(p.n_bar)
    return amp * (1.0 - r.visibility * np.cos(d * (p.delta_omega_T * np.asarray(t) + p.delta_theta)))


def rate_integral(m, h, t0, t1, p: ProtocolParams, r: ReceiverModel):
    """Expected number of clicks on [t0, t1]; broadcasts over array arguments."""
    d = (np.asarray(h) - np.asarray(m)).astype(float)
    t0 = np.asarray(t0, dtype=float)
    t1 = np.asarray(t1, dtype=float)
    span = t1 - t0
    x = 0.5 * d * p.delta_omega_T * span
    small = np.abs(x) < 1e-6
    with np.errstate(invalid="ignore", divide="ignore"):
        sinc = np.where(small, 1.0 - x**2 / 6.0 + x**4 / 120.0, np.sin(x) / np.where(small, 1.0, x))
    osc = np.cos(d * (p.delta_omega_T * 0.5 * (t0 + t1) + p.delta_theta)) * sinc
    val = r.amplitude(p.n_bar) * span * (1.0 - r.visibility * osc)
    out = np.maximum(val, 0.0)
    return float(out) if out.ndim == 0 else out


def sample_next_arrival(m, h, t0, p: ProtocolParams, r: ReceiverModel, rng: np.random.Generator):
    """Next click after ``t0`` within the pulse, or None. Sampled by thinning."""
    t = _kernel.next_arrival(
        rng, int(h) - int(m), float(t0), p.delta_omega_T, p.delta_theta,
        r.amplitude(p.n_bar), r.visibility,
    )
    return None if t < 0 else t


def _normalize_log(logw: np.ndarray) -> Posterior | None:
    top = logw.max()
    if not np.isfinite(top):
        return None
    w = np.exp(logw - top)
    return Posterior(w / w.sum())


def bayes_click_update(post: Posterior, h, t_prev, t_k, p: ProtocolParams, r: ReceiverModel) -> Posterior:
    """Posterior after a click at ``t_k`` with no click on (t_prev, t_k)."""
    if not t_prev < t_k:
        raise ValueError(f"need t_prev < t_k, got {t_prev} >= {t_k}")
    ms = np.arange(post.M)
    lam = displaced_rate(ms, h, t_k, p, r)
    Lam = rate_integral(ms, h, t_prev, t_k, p, r)
    with np.errstate(divide="ignore"):
        logw = np.log(post.weights) + np.log(lam) - Lam
    out = _normalize_log(logw)
    if out is None:
        warnings.warn("all hypotheses have zero likelihood; resetting to uniform", DegeneratePosteriorWarning)
        return Posterior.uniform(post.M)
    return out


def bayes_final_update(post: Posterior, h, t_last, p: ProtocolParams, r: ReceiverModel) -> Posterior:
    """Fold in the absence of clicks between ``t_last`` and the end of the pulse."""
    ms = np.arange(post.M)
    with np.errstate(divide="ignore"):
        logw = np.log(post.weights) - rate_integral(ms, h, t_last, 1.0, p, r)
    return _normalize_log(logw)


def run_trial(true_symbol: int, p: ProtocolParams, r: ReceiverModel, rng: np.random.Generator) -> TrialRecord:
    """Simulate one pulse, keeping the full click history.

    Draws from ``rng`` in exactly the same order as the compiled path used by
    :func:`estimate_ser`, so both give the same decision for the same stream.
    """
    if not 0 <= true_symbol < p.M:
        raise ValueError(f"true_symbol {true_symbol} outside 0..{p.M - 1}")
    h = int(_kernel.initial_hypothesis(rng, p.M, r._h0_code(p.M)))
    post = Posterior.uniform(p.M)
    arrivals, hyps = [], [h]
    t_prev = 0.0
    capped = False
    while True:
        t = sample_next_arrival(true_symbol, h, t_prev, p, r, rng)
        if t is None:
            break
        if len(arrivals) >= r.max_events:
            capped = True
            break
        post = bayes_click_update(post, h, t_prev, t, p, r)
        h = post.argmax()
        arrivals.append(t)
        hyps.append(h)
        t_prev = t
    post = bayes_final_update(post, h, t_prev, p, r)
    return TrialRecord(true_symbol, arrivals, hyps, post, post.argmax(), capped)


def default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, block])))


def simulate_decisions(p: ProtocolParams, r: ReceiverModel, trials: int, seed: int, threads: int | None = None):
    """Decisions, click counts and status flags for trials ``0..trials-1``.

    Trials are grouped in fixed blocks of ``BLOCK_SIZE``; block ``b`` owns the
    stream seeded by ``(seed, b)``. Output does not depend on ``threads``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    threads = threads or default_threads()
    amp = r.amplitude(p.n_bar)
    h0 = r._h0_code(p.M)
    starts = list(range(0, trials, BLOCK_SIZE))

    def work(b):
        start = starts[b]
        return _kernel.run_block(
            block_rng(seed, b), start, min(BLOCK_SIZE, trials - start), p.M,
            p.delta_omega_T, p.delta_theta, amp, r.visibility, h0, r.max_events,
        )

    if threads == 1 or len(starts) == 1:
        parts = [work(b) for b in range(len(starts))]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, range(len(starts))))
    return tuple(np.concatenate(col) for col in zip(*parts))


def estimate_ser(p: ProtocolParams, r: ReceiverModel, trials: int, seed: int = 0, threads: int | None = None) -> SerEstimate:
    """Monte-Carlo symbol error rate with a Wilson 95% interval."""
    decisions, _, status = simulate_decisions(p, r, trials, seed, threads)
    truth = np.arange(trials) % p.M
    errors = int(np.count_nonzero(decisions != truth))
    capped = int(np.count_nonzero(status & _kernel.STATUS_CAPPED))
    degenerate = int(np.count_nonzero(status & _kernel.STATUS_DEGENERATE))
    if capped:
        warnings.warn(f"{capped} trials hit the event cap of {r.max_events}", RuntimeWarning)
    if degenerate:
        warnings.warn(f"{degenerate} trials had a degenerate posterior", DegeneratePosteriorWarning)
    return SerEstimate(errors, trials, errors / trials, wilson_ci(errors, trials), capped, degenerate)
