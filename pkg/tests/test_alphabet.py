import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from cfsk.alphabet import (
    TWO_PI, Constellation, Kind, ProtocolParams, check_gram, gram_matrix, mode_gram,
    mode_overlap, qam16_amplitudes,
)


def quad_overlap(d, dwt, dth):
    """Reference: integrate exp(i d (dwt t + dth)) over the unit pulse."""
    f = lambda t, part: part(np.exp(1j * d * (dwt * t + dth)))
    opts = dict(epsabs=1e-13, epsrel=1e-13, limit=400)
    re = quad(f, 0.0, 1.0, args=(np.real,), **opts)[0]
    im = quad(f, 0.0, 1.0, args=(np.imag,), **opts)[0]
    return re + 1j * im


class TestModeOverlap:
    def test_identical_modes(self):
        assert mode_overlap(0, 3.7, 1.2) == 1.0 + 0.0j

    def test_orthogonal_fsk_zero(self):
        assert abs(mode_overlap(1, TWO_PI, 0.0)) < 1e-15

    def test_half_period(self):
        assert mode_overlap(1, np.pi, 0.0) == pytest.approx(2j / np.pi, abs=1e-15)

    @pytest.mark.parametrize("M", [2, 4, 16, 64])
    def test_psk_limit(self, M):
        for dwt in (0.0, 1e-9, 1e-7):
            assert mode_overlap(1, dwt, TWO_PI / M) == pytest.approx(np.exp(1j * TWO_PI / M), abs=1e-7 * (dwt > 0) + 1e-15)

    def test_series_branch_continuous(self):
        # straddle the switch between the Taylor branch and the closed form
        x = np.array([0.999e-6, 1.001e-6])
        g = mode_overlap(1, x, 0.0)
        exact = np.array([quad_overlap(1, v, 0.0) for v in x])
        assert np.max(np.abs(g - exact)) < 1e-14

    def test_matches_quadrature_on_random_points(self):
        rng = np.random.default_rng(7)
        d = rng.integers(-20, 21, 1000)
        dwt = rng.uniform(0, 2 * TWO_PI, 1000)
        # a slice near the singularity exercises the series branch
        dwt[:50] = rng.uniform(0, 2e-6, 50)
        dth = rng.uniform(0, TWO_PI, 1000)
        got = mode_overlap(d, dwt, dth)
        ref = np.array([quad_overlap(*args) for args in zip(d, dwt, dth)])
        assert np.max(np.abs(got - ref)) < 1e-10

    @given(st.integers(-64, 64), st.floats(0, 4 * np.pi), st.floats(0, TWO_PI))
    def test_bounded_and_conjugate_symmetric(self, d, dwt, dth):
        g = mode_overlap(d, dwt, dth)
        assert abs(g) <= 1 + 1e-12
        assert abs(mode_overlap(-d, dwt, dth) - np.conj(g)) <= 1e-14


class TestConstellation:
    def test_qam16_needs_16(self):
        with pytest.raises(ValueError, match="QAM16 requires M=16"):
            Constellation.build(Kind.QAM16, 8, 1.0)

    def test_qam16_mean_energy(self):
        a = qam16_amplitudes(7.0)
        assert np.mean(np.abs(a) ** 2) == pytest.approx(7.0, rel=1e-14)
        assert len(set(np.round(a, 12))) == 16

    def test_ppm_needs_two_slots(self):
        with pytest.raises(ValueError):
            Constellation.ppm(1, 1.0)

    @pytest.mark.parametrize("bad", [dict(M=0, n_bar=1), dict(M=4, n_bar=-1), dict(M=4, n_bar=1, delta_omega_T=-1)])
    def test_params_validation(self, bad):
        with pytest.raises(ValueError):
            ProtocolParams(**bad)

    def test_phase_reduced(self):
        assert ProtocolParams(4, 1.0, 0.0, TWO_PI + 0.5).delta_theta == pytest.approx(0.5)


class TestGram:
    def test_vacuum_all_ones(self):
        G = gram_matrix(Constellation.cfsk(8, 0.0, 2.3, 0.4))
        assert np.array_equal(G, np.ones((8, 8)))

    def test_psk_binary(self):
        G = gram_matrix(Constellation.psk(2, 1.0))
        assert G[0, 1] == pytest.approx(np.exp(-2.0), abs=1e-15)

    def test_ppm_offdiagonal(self):
        G = gram_matrix(Constellation.ppm(4, 1.0))
        off = G[~np.eye(4, dtype=bool)]
        assert np.allclose(off, np.exp(-1.0), atol=1e-15, rtol=0)

    @pytest.mark.parametrize("kind, M", [(k, M) for k in Kind for M in (2, 4, 16, 64)
                                          if k is not Kind.QAM16 or M == 16])
    @pytest.mark.parametrize("n_bar", [0, 0.5, 1, 5, 12])
    def test_valid_gram(self, kind, M, n_bar):
        c = Constellation.build(kind, M, n_bar, 1.9 * np.pi, 0.3)
        G = gram_matrix(c)
        assert np.allclose(G, G.conj().T, atol=1e-15, rtol=0)
        assert np.allclose(np.diag(G), 1.0, atol=1e-14)
        assert np.linalg.eigvalsh(G).min() > -1e-10
        check_gram(G)

    @pytest.mark.parametrize("M", [2, 4, 16, 64])
    def test_psk_circulant(self, M):
        G = gram_matrix(Constellation.psk(M, 3.0))
        first = G[0]
        for j in range(M):
            assert np.allclose(G[j], np.roll(first, j), atol=1e-13, rtol=0)

    def test_cfsk_toeplitz_not_circulant(self):
        G = mode_gram(ProtocolParams(8, 1.0, 1.5, 0.7))
        assert np.allclose(G[1:, 1:], G[:-1, :-1])
        assert not np.allclose(G[1], np.roll(G[0], 1))

    def test_check_gram_rejects(self):
        with pytest.raises(ValueError):
            check_gram(np.array([[1.0, 2.0], [2.0, 1.0]]))
        with pytest.raises(ValueError):
            check_gram(np.array([[1.0, 0.5], [0.1, 1.0]]))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 32), st.floats(0, 20), st.floats(0, 4 * np.pi), st.floats(0, TWO_PI))
    def test_cfsk_gram_is_psd(self, M, n_bar, dwt, dth):
        check_gram(gram_matrix(Constellation.cfsk(M, n_bar, dwt, dth)))
