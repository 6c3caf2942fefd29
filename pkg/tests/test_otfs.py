import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from otfspredict.otfs import (
    DdChannelMatrix,
    OtfsDims,
    apply_awgn,
    dd_to_td_channel,
    dft_matrix,
    heisenberg_transmit,
    isfft,
    sfft,
    td_to_dd_channel,
    unvec,
    vec,
    wigner_receive,
)

from conftest import crandn

SIZES = [1, 2, 4, 8, 16]


def kron_oracle(h_td, dims):
    w = np.kron(dft_matrix(dims.n), np.eye(dims.m))
    return w @ h_td @ w.conj().T


class TestDft:
    def test_size_one(self):
        assert np.array_equal(dft_matrix(1), np.array([[1.0 + 0j]]))

    def test_size_two(self):
        expected = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
        np.testing.assert_allclose(dft_matrix(2), expected, atol=1e-15)

    @pytest.mark.parametrize("n", [1, 2, 3, 5, 8, 16, 64, 512])
    def test_unitary(self, n):
        f = dft_matrix(n)
        assert np.max(np.abs(f @ f.conj().T - np.eye(n))) < 1e-12

    def test_rejects_zero(self):
        with pytest.raises(ValueError):
            dft_matrix(0)


class TestSymplecticFft:
    def test_zero(self):
        d = OtfsDims(4, 2)
        assert np.all(isfft(np.zeros((4, 2)), d) == 0)
        assert np.all(sfft(np.zeros((4, 2)), d) == 0)

    def test_delta(self):
        d = OtfsDims(2, 2)
        x = np.zeros((2, 2))
        x[0, 0] = 1
        np.testing.assert_allclose(isfft(x, d), np.full((2, 2), 0.5), atol=1e-15)

    def test_inverse_of_delta(self):
        d = OtfsDims(2, 2)
        out = sfft(np.full((2, 2), 0.5 + 0j), d)
        expected = np.zeros((2, 2))
        expected[0, 0] = 1
        np.testing.assert_allclose(out, expected, atol=1e-15)

    @pytest.mark.parametrize("m", SIZES)
    @pytest.mark.parametrize("n", [1, 2, 4, 8])
    def test_round_trip(self, rng, m, n):
        d = OtfsDims(m, n)
        x = crandn(rng, m, n)
        assert np.max(np.abs(sfft(isfft(x, d), d) - x)) < 1e-12
        assert np.max(np.abs(isfft(sfft(x, d), d) - x)) < 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            isfft(np.zeros((3, 2)), OtfsDims(2, 2))
        with pytest.raises(ValueError):
            sfft(np.zeros((2, 3)), OtfsDims(2, 2))


class TestHeisenbergWigner:
    def test_n1_identity(self, rng):
        d = OtfsDims(5, 1)
        x = crandn(rng, 5)
        np.testing.assert_allclose(heisenberg_transmit(x, d), x, atol=1e-15)
        np.testing.assert_allclose(wigner_receive(x, d), x, atol=1e-15)

    def test_kronecker_example(self):
        d = OtfsDims(2, 2)
        x = np.zeros(4, dtype=complex)
        x[0] = 1
        expected = np.array([1, 0, 1, 0]) / np.sqrt(2)
        np.testing.assert_allclose(heisenberg_transmit(x, d), expected, atol=1e-15)

    def test_matches_vec_definition(self, rng):
        # s = vec(F_M^H X_TF) with X_TF = isfft(X_DD)
        d = OtfsDims(4, 8)
        x = crandn(rng, 4, 8)
        s_def = vec(dft_matrix(4).conj().T @ isfft(x, d))
        np.testing.assert_allclose(heisenberg_transmit(vec(x), d), s_def, atol=1e-12)
        np.testing.assert_allclose(unvec(vec(x), d), x)

    @pytest.mark.parametrize("m", SIZES)
    @pytest.mark.parametrize("n", [1, 2, 4, 8])
    def test_inverse_and_isometry(self, rng, m, n):
        d = OtfsDims(m, n)
        x = crandn(rng, m * n)
        s = heisenberg_transmit(x, d)
        assert np.max(np.abs(wigner_receive(s, d) - x)) < 1e-12
        assert abs(np.linalg.norm(s) - np.linalg.norm(x)) < 1e-12
        assert abs(np.linalg.norm(wigner_receive(x, d)) - np.linalg.norm(x)) < 1e-12

    @pytest.mark.parametrize("m,n", [(m, n) for m in SIZES for n in [1, 2, 4, 8] if m * n <= 64])
    def test_blockwise_equals_explicit_kron(self, rng, m, n):
        d = OtfsDims(m, n)
        x = crandn(rng, m * n)
        k = np.kron(dft_matrix(n).conj().T, np.eye(m))
        np.testing.assert_allclose(heisenberg_transmit(x, d), k @ x, atol=1e-12)
        np.testing.assert_allclose(wigner_receive(x, d), k.conj().T @ x, atol=1e-12)

    def test_length_checked(self):
        with pytest.raises(ValueError):
            heisenberg_transmit(np.zeros(5), OtfsDims(2, 2))
        with pytest.raises(ValueError):
            wigner_receive(np.zeros(3), OtfsDims(2, 2))


class TestChannelConversion:
    def test_identity(self):
        d = OtfsDims(4, 4)
        np.testing.assert_allclose(td_to_dd_channel(np.eye(16), d).mat, np.eye(16), atol=1e-14)

    def test_norm_preserved(self, rng):
        d = OtfsDims(8, 4)
        h = crandn(rng, 32, 32)
        assert abs(td_to_dd_channel(h, d).fro_norm - np.linalg.norm(h)) < 1e-10

    @pytest.mark.parametrize("m,n", [(m, n) for m in SIZES for n in [1, 2, 4, 8] if m * n <= 64])
    def test_pathway_equality(self, rng, m, n):
        d = OtfsDims(m, n)
        h = crandn(rng, m * n, m * n)
        x = crandn(rng, m * n)
        y_direct = td_to_dd_channel(h, d).mat @ x
        y_path = wigner_receive(h @ heisenberg_transmit(x, d), d)
        assert np.max(np.abs(y_direct - y_path)) < 1e-10

    @pytest.mark.parametrize("m,n", [(1, 1), (2, 2), (4, 2), (2, 8), (16, 1), (4, 4)])
    def test_kron_oracle(self, rng, m, n):
        d = OtfsDims(m, n)
        h = crandn(rng, m * n, m * n)
        assert np.max(np.abs(td_to_dd_channel(h, d).mat - kron_oracle(h, d))) < 1e-12

    def test_spectrum_preserved(self, rng):
        d = OtfsDims(2, 2)
        h = crandn(rng, 4, 4)
        ev_dd = np.sort_complex(np.linalg.eigvals(td_to_dd_channel(h, d).mat))
        ev_td = np.sort_complex(np.linalg.eigvals(kron_oracle(h, d)))
        np.testing.assert_allclose(ev_dd, ev_td, atol=1e-10)
        # eigenvalues match those of H_TD itself as a multiset
        ev0 = np.linalg.eigvals(h)
        for e in ev_dd:
            assert np.min(np.abs(ev0 - e)) < 1e-10

    def test_inverse(self, rng):
        d = OtfsDims(4, 4)
        h = crandn(rng, 16, 16)
        np.testing.assert_allclose(dd_to_td_channel(td_to_dd_channel(h, d)), h, atol=1e-12)

    def test_rejects_wrong_size(self):
        with pytest.raises(ValueError):
            td_to_dd_channel(np.eye(8), OtfsDims(2, 2))
        with pytest.raises(ValueError):
            td_to_dd_channel(np.zeros((4, 3)), OtfsDims(2, 2))

    def test_dd_matrix_invariants(self):
        with pytest.raises(ValueError):
            DdChannelMatrix(OtfsDims(2, 2), np.zeros((3, 3)))
        bad = np.eye(4, dtype=complex)
        bad[0, 0] = np.nan
        with pytest.raises(ValueError):
            DdChannelMatrix(OtfsDims(2, 2), bad)

    def test_dims_validated(self):
        with pytest.raises(ValueError):
            OtfsDims(0, 4)


@settings(max_examples=40, deadline=None)
@given(
    m=st.sampled_from(SIZES),
    n=st.sampled_from([1, 2, 4, 8]),
    seed=st.integers(0, 2**32 - 1),
)
def test_transforms_property(m, n, seed):
    rng = np.random.default_rng(seed)
    d = OtfsDims(m, n)
    x = crandn(rng, m, n)
    assert np.max(np.abs(sfft(isfft(x, d), d) - x)) < 1e-12
    v = vec(x)
    assert np.max(np.abs(wigner_receive(heisenberg_transmit(v, d), d) - v)) < 1e-12


class TestAwgn:
    def test_infinite_snr(self, rng):
        x = crandn(rng, 10)
        assert np.array_equal(apply_awgn(x, np.inf, rng), x)

    def test_zero_signal_rejected(self, rng):
        with pytest.raises(ValueError):
            apply_awgn(np.zeros(8), 10.0, rng)

    def test_empty_rejected(self, rng):
        with pytest.raises(ValueError):
            apply_awgn(np.zeros(0), 10.0, rng)

    def test_noise_variance(self, rng):
        x = np.ones(100_000, dtype=complex)
        y = apply_awgn(x, 10.0, rng)
        noise = y - x
        nominal = 1.0 / 10.0
        assert abs(np.mean(np.abs(noise) ** 2) / nominal - 1) < 0.05
        # circular symmetry: equal power on both quadratures
        assert abs(np.var(noise.real) / np.var(noise.imag) - 1) < 0.05
