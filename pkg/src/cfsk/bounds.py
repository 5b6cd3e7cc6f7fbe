"""Error bounds: Helstrom bound via the square-root measurement, closed forms,
and the standard quantum limit of an ideal heterodyne receiver."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from cfsk._stats import wilson_ci
from cfsk.alphabet import Constellation, Kind, gram_matrix, mode_gram

# Eigenvalues below this fraction of the largest are treated as zero.
EIG_CLIP_REL = 1e-12
# More negative than this and the input is not a Gram matrix.
EIG_FAIL = -1e-8

SQL_CHUNK = 1 << 15


class InvalidGramError(ValueError):
    """Raised when a matrix handed to the SRM is not positive semidefinite."""


class Method(str, enum.Enum):
    SRM_GENERIC = "srm_generic"
    PSK_CIRCULANT = "psk_circulant"
    PPM_CLOSED = "ppm_closed"
    BINARY_CLOSED = "binary_closed"
    SQL_MC = "sql_mc"


@dataclass(frozen=True)
class BoundResult:
    p_error: float
    method: Method
    ci95_halfwidth: float = 0.0
    errors: int | None = None
    trials: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.p_error <= 1.0:
            raise ValueError(f"p_error out of range: {self.p_error}")
        if self.method is not Method.SQL_MC and self.ci95_halfwidth != 0:
            raise ValueError("only Monte-Carlo bounds carry a confidence interval")


def _clipped(lam: np.ndarray) -> np.ndarray:
    top = lam.max(axis=-1, keepdims=True)
    return np.where(lam > EIG_CLIP_REL * top, lam, 0.0)


def srm_p_error(G: np.ndarray) -> np.ndarray:
    """Vectorized SRM error over a stack of Gram matrices with shape (..., M, M)."""
    G = np.asarray(G)
    lam, U = np.linalg.eigh(G)
    if np.any(lam.min(axis=-1) < EIG_FAIL):
        raise InvalidGramError(f"Gram matrix has eigenvalue {lam.min():.3e} < {EIG_FAIL}")
    kept = _clipped(lam)
    W = np.abs(U) ** 2
    S = (U * np.sqrt(kept)[..., None, :]) @ np.swapaxes(U, -1, -2).conj()
    # 1 - S_mm^2 = sum_{k != m} |S_mk|^2 + (1 - (S^2)_mm); the second term is
    # the weight of the clipped eigenvalues. Avoids cancellation for tiny errors.
    off_diag = 1.0 - np.eye(G.shape[-1])
    off = np.sum(np.abs(S * off_diag) ** 2, axis=-1)
    lost = np.einsum("...mk,...k->...m", W, lam - kept)
    p = np.mean(off + lost, axis=-1)
    # mean(S_mm^2) >= (tr sqrt(G) / M)^2 >= 1/M, so anything above 1 - 1/M is rounding
    return np.clip(p, 0.0, 1.0 - 1.0 / G.shape[-1])


def srm_error(G: np.ndarray) -> BoundResult:
    """Error probability of the square-root measurement for equiprobable pure states."""
    G = np.asarray(G)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise InvalidGramError(f"expected a square matrix, got shape {G.shape}")
    return BoundResult(float(srm_p_error(G)), Method.SRM_GENERIC)


def binary_helstrom(overlap_sq: float) -> float:
    """Helstrom error for two equiprobable pure states with |<psi0|psi1>|^2 = overlap_sq."""
    if not -1e-15 <= overlap_sq <= 1 + 1e-15:
        raise ValueError(f"overlap_sq must lie in [0, 1], got {overlap_sq}")
    overlap_sq = min(max(overlap_sq, 0.0), 1.0)
    # (1 - sqrt(1 - x))/2 == x / (2 (1 + sqrt(1 - x))) without cancellation
    return overlap_sq / (2.0 * (1.0 + np.sqrt(1.0 - overlap_sq)))


def psk_helstrom_circulant(M: int, n_bar: float) -> BoundResult:
    if M < 1 or n_bar < 0:
        raise ValueError("need M >= 1 and n_bar >= 0")
    d = np.arange(M)
    first_row = np.exp(-n_bar * (1.0 - np.exp(2j * np.pi * d / M)))
    lam = np.fft.fft(first_row).real
    success = (np.sqrt(_clipped(np.maximum(lam, 0.0))).sum() / M) ** 2
    return BoundResult(float(np.clip(1.0 - success, 0.0, 1.0)), Method.PSK_CIRCULANT)


def ppm_helstrom_closed(M: int, n_bar: float) -> BoundResult:
    if M < 2:
        raise ValueError("PPM needs M >= 2")
    g = np.exp(-n_bar)
    # 1 - success, expanded so that it does not cancel when g -> 0
    root_a = np.sqrt(1 + (M - 1) * g)
    root_b = np.sqrt(1 - g)
    s = (root_a + (M - 1) * root_b) / M
    one_minus_s = ((1 - root_a) + (M - 1) * (1 - root_b)) / M
    p = one_minus_s * (1 + s)
    return BoundResult(float(np.clip(p, 0.0, 1.0)), Method.PPM_CLOSED)


def multiplexed_bpsk_error(n_bar_per_channel: float, channels: int) -> float:
    """Probability that at least one of ``channels`` independent BPSK channels errs."""
    if channels < 1:
        raise ValueError("channels must be >= 1")
    p = binary_helstrom(np.exp(-4.0 * n_bar_per_channel))
    return float(-np.expm1(channels * np.log1p(-p)))


def heterodyne_means(c: Constellation) -> np.ndarray:
    """Mean outcome vectors (rows) of an ideal heterodyne receiver, one per symbol.

    Coordinates are taken in an orthonormal basis of the span of the symbol
    modes, so all noise dimensions are equivalent.
    """
    if c.kind is Kind.QAM16:
        return np.asarray(c.amplitudes, dtype=complex)[:, None]
    if c.kind is Kind.PPM:
        return np.sqrt(c.n_bar) * np.eye(c.M, dtype=complex)
    lam, U = np.linalg.eigh(mode_gram(c.params))
    L = U * np.sqrt(_clipped(np.maximum(lam, 0.0)))
    return np.sqrt(c.n_bar) * L


def sql_error_mc(c: Constellation, trials: int, seed: int = 0) -> BoundResult:
    """Standard quantum limit estimated by Monte-Carlo heterodyne + minimum distance.

    Noise is circular complex Gaussian with E|z|^2 = 1 per dimension (shot
    noise in photon-number units). Truth symbols are assigned round-robin.
    Trials are processed in fixed chunks, chunk ``k`` drawing from its own
    stream seeded by ``(seed, k)``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    mu = heterodyne_means(c)
    M, dim = mu.shape
    norms = np.sum(np.abs(mu) ** 2, axis=1)
    errors = 0
    for chunk, start in enumerate(range(0, trials, SQL_CHUNK)):
        n = min(SQL_CHUNK, trials - start)
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, chunk])))
        truth = (start + np.arange(n)) % M
        z = rng.standard_normal((n, dim, 2)) @ np.array([1.0, 1j]) / np.sqrt(2.0)
        y = mu[truth] + z
        # argmin |y - mu_k|^2 == argmax 2 Re<mu_k, y> - |mu_k|^2
        score = 2.0 * (y @ mu.conj().T).real - norms
        errors += int(np.count_nonzero(score.argmax(axis=1) != truth))
    p = errors / trials
    lo, hi = wilson_ci(errors, trials)
    return BoundResult(p, Method.SQL_MC, (hi - lo) / 2.0, errors, trials)


def helstrom(c: Constellation) -> BoundResult:
    """Best available Helstrom/SRM evaluation for a constellation."""
    if c.kind is Kind.PSK:
        return psk_helstrom_circulant(c.M, c.n_bar)
    if c.kind is Kind.PPM:
        return ppm_helstrom_closed(c.M, c.n_bar)
    if c.M == 2:
        G = gram_matrix(c)
        return BoundResult(binary_helstrom(abs(G[0, 1]) ** 2), Method.BINARY_CLOSED)
    return srm_error(gram_matrix(c))
