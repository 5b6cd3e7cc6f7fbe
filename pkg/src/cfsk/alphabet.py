"""Modulation alphabets and coherent-state Gram matrices.

Every symbol is a coherent pulse of unit duration (time is measured in
units of the pulse length T). CFSK symbol ``m`` carries the temporal mode
``exp(i*m*(dwt*t + dtheta))``, so PSK is the special case ``dwt = 0``,
``dtheta = 2*pi/M``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi

# Below this |d * dwt| the overlap uses its Taylor expansion.
SERIES_CUTOFF = 1e-6

# Tolerance of the PSD check on Gram matrices.
PSD_TOL = 1e-10


class Kind(str, enum.Enum):
    CFSK = "cfsk"
    PSK = "psk"
    QAM16 = "qam16"
    PPM = "ppm"


@dataclass(frozen=True)
class ProtocolParams:
    """Alphabet definition.

    Attributes:
        M: Alphabet size.
        n_bar: Mean photon number per symbol.
        delta_omega_T: Frequency step times pulse duration (radians).
        delta_theta: Phase step between adjacent symbols (radians), reduced
            into [0, 2*pi).
    """

    M: int
    n_bar: float
    delta_omega_T: float = 0.0
    delta_theta: float = 0.0

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 1:
            raise ValueError(f"M must be a positive integer, got {self.M!r}")
        if not self.n_bar >= 0:
            raise ValueError(f"n_bar must be >= 0, got {self.n_bar!r}")
        if not self.delta_omega_T >= 0:
            raise ValueError(f"delta_omega_T must be >= 0, got {self.delta_omega_T!r}")
        object.__setattr__(self, "M", int(self.M))
        object.__setattr__(self, "n_bar", float(self.n_bar))
        object.__setattr__(self, "delta_omega_T", float(self.delta_omega_T))
        object.__setattr__(self, "delta_theta", float(np.mod(self.delta_theta, TWO_PI)))

    @classmethod
    def psk(cls, M: int, n_bar: float) -> "ProtocolParams":
        return cls(M, n_bar, 0.0, TWO_PI / M)

    def with_nbar(self, n_bar: float) -> "ProtocolParams":
        return ProtocolParams(self.M, n_bar, self.delta_omega_T, self.delta_theta)


def qam16_amplitudes(n_bar: float) -> np.ndarray:
    """Square 16-QAM amplitudes with mean photon number ``n_bar`` per symbol.

    Symbols are ordered row-major over the levels {-3, -1, 1, 3}.
    """
    levels = np.array([-3.0, -1.0, 1.0, 3.0])
    grid = levels[None, :] + 1j * levels[:, None]
    # mean |c|^2 over the 16 raw points is 10
    return grid.ravel() * np.sqrt(n_bar / 10.0)


@dataclass(frozen=True)
class Constellation:
    kind: Kind
    params: ProtocolParams
    amplitudes: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        kind = Kind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is Kind.QAM16:
            if self.params.M != 16:
                raise ValueError(f"QAM16 requires M=16, got M={self.params.M}")
            if self.amplitudes is None:
                object.__setattr__(self, "amplitudes", qam16_amplitudes(self.params.n_bar))
        elif kind is Kind.PPM and self.params.M < 2:
            raise ValueError("PPM requires M >= 2")

    @property
    def M(self) -> int:
        return self.params.M

    @property
    def n_bar(self) -> float:
        return self.params.n_bar

    @classmethod
    def cfsk(cls, M, n_bar, delta_omega_T, delta_theta) -> "Constellation":
        return cls(Kind.CFSK, ProtocolParams(M, n_bar, delta_omega_T, delta_theta))

    @classmethod
    def psk(cls, M, n_bar) -> "Constellation":
        return cls(Kind.PSK, ProtocolParams.psk(M, n_bar))

    @classmethod
    def qam16(cls, n_bar) -> "Constellation":
        return cls(Kind.QAM16, ProtocolParams(16, n_bar))

    @classmethod
    def ppm(cls, M, n_bar) -> "Constellation":
        return cls(Kind.PPM, ProtocolParams(M, n_bar))

    @classmethod
    def build(cls, kind, M, n_bar, delta_omega_T=0.0, delta_theta=0.0) -> "Constellation":
        """Construct any kind from flat arguments (CLI / sweep helper)."""
        kind = Kind(kind)
        if kind is Kind.CFSK:
            return cls.cfsk(M, n_bar, delta_omega_T, delta_theta)
        if kind is Kind.PSK:
            return cls.psk(M, n_bar)
        if kind is Kind.QAM16:
            if M != 16:
                raise ValueError(f"QAM16 requires M=16, got M={M}")
            return cls.qam16(n_bar)
        return cls.ppm(M, n_bar)


def mode_overlap(d, delta_omega_T, delta_theta):
    """Overlap of rectangular temporal modes whose symbol indices differ by ``d``.

    Returns ``int_0^1 exp(i*d*(dwt*t + dtheta)) dt``. Broadcasts over array
    arguments.
    """
    d = np.asarray(d, dtype=float)
    x = d * delta_omega_T
    small = np.abs(x) < SERIES_CUTOFF
    safe_x = np.where(small, 1.0, x)
    with np.errstate(invalid="ignore", divide="ignore"):
        closed = np.expm1(1j * safe_x) / (1j * safe_x)
    # (e^{ix} - 1)/(ix) to fourth order
    series = 1 + 1j * x / 2 - x**2 / 6 - 1j * x**3 / 24 + x**4 / 120
    envelope = np.where(small, series, closed)
    out = np.exp(1j * d * delta_theta) * envelope
    return out[()] if out.ndim == 0 else out


def mode_gram(params: ProtocolParams) -> np.ndarray:
    """Matrix of temporal-mode overlaps ``gamma(m - j)`` (not the state Gram)."""
    idx = np.arange(params.M)
    d = idx[None, :] - idx[:, None]
    return np.asarray(mode_overlap(d, params.delta_omega_T, params.delta_theta), dtype=complex)


def gram_matrix(c: Constellation) -> np.ndarray:
    """Pairwise inner products ``G[j, m] = <psi_j|psi_m>`` of the alphabet's states."""
    M, n_bar = c.M, c.n_bar
    if c.kind in (Kind.CFSK, Kind.PSK):
        G = np.exp(-n_bar * (1.0 - mode_gram(c.params)))
    elif c.kind is Kind.QAM16:
        a = np.asarray(c.amplitudes, dtype=complex)
        p = np.abs(a) ** 2
        G = np.exp(-p[:, None] / 2 - p[None, :] / 2 + np.conj(a)[:, None] * a[None, :])
    else:
        g = np.exp(-n_bar)
        G = np.full((M, M), g, dtype=complex)
        np.fill_diagonal(G, 1.0)
    np.fill_diagonal(G, 1.0)
    return G


def check_gram(G: np.ndarray, tol: float = PSD_TOL) -> None:
    """Raise ValueError unless G is a valid Gram matrix of normalized states."""
    G = np.asarray(G)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ValueError(f"Gram matrix must be square, got shape {G.shape}")
    if not np.allclose(G, G.conj().T, atol=1e-12, rtol=0):
        raise ValueError("Gram matrix is not Hermitian")
    if not np.allclose(np.diag(G), 1.0, atol=1e-12, rtol=0):
        raise ValueError("Gram matrix diagonal is not 1")
    if np.any(np.abs(G) > 1 + 1e-12):
        raise ValueError("Gram matrix has an entry with modulus > 1")
    lam_min = np.linalg.eigvalsh(G).min()
    if lam_min < -tol:
        raise ValueError(f"Gram matrix is not PSD (min eigenvalue {lam_min:.3e})")
