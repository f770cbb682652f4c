import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from fuyau import symfunc as sf


def fd_sigma2_sqrt(a, g, direction, eps=1e-5):
    """Central finite difference of sigma_2^(1/2) along a Hermitian direction."""

    def val(m):
        lam = sf.generalized_spectrum(m, g)
        return np.sqrt(sf.sigma_k(lam, 2))

    return (val(a + eps * direction) - val(a - eps * direction)) / (2 * eps)


def fd_second_derivative(a, g, direction, eps=1e-4):
    def val(m):
        lam = sf.generalized_spectrum(m, g)
        return np.sqrt(sf.sigma_k(lam, 2))

    return (val(a + eps * direction) - 2 * val(a) + val(a - eps * direction)) / eps**2


def hermitian_basis(n):
    """Real basis of the Hermitian matrices: E_aa, (E_ab+E_ba), i(E_ab-E_ba)."""
    basis = []
    for a in range(n):
        e = np.zeros((n, n), complex)
        e[a, a] = 1.0
        basis.append(e)
    for a in range(n):
        for b in range(a + 1, n):
            e = np.zeros((n, n), complex)
            e[a, b] = 1.0
            e[b, a] = 1.0
            basis.append(e)
            e = np.zeros((n, n), complex)
            e[a, b] = 1.0j
            e[b, a] = -1.0j
            basis.append(e)
    return basis


class TestSigmaK:
    def test_known_values(self):
        assert sf.sigma_k([1.0, 2.0, 3.0], 2) == pytest.approx(11.0)
        assert sf.sigma_k([2.0, 1.0, -0.5], 2) == pytest.approx(0.5)

    @pytest.mark.parametrize("n", [2, 3, 4, 6])
    def test_all_ones(self, n):
        assert sf.sigma_k(np.ones(n), 2) == pytest.approx(n * (n - 1) / 2)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            sf.sigma_k([1.0, 2.0], 3)
        with pytest.raises(ValueError):
            sf.sigma_k([1.0, 2.0], 0)

    @given(
        lam=st.lists(st.floats(-5, 5), min_size=2, max_size=6),
        seed=st.integers(0, 2**31),
    )
    @settings(max_examples=200, deadline=None)
    def test_permutation_symmetry_and_identity(self, lam, seed):
        lam = np.asarray(lam)
        perm = np.random.default_rng(seed).permutation(lam.size)
        assert sf.sigma_k(lam[perm], 2) == pytest.approx(sf.sigma_k(lam, 2), abs=1e-9)
        s1 = lam.sum()
        assert sf.sigma_k(lam, 2) == pytest.approx(
            0.5 * (s1**2 - (lam**2).sum()), rel=1e-12, abs=1e-9
        )

    def test_combinatorial_oracle(self):
        from itertools import combinations

        rng = np.random.default_rng(7)
        for n in (2, 3, 5):
            lam = rng.normal(size=n)
            for k in range(1, n + 1):
                brute = sum(np.prod([lam[i] for i in c]) for c in combinations(range(n), k))
                assert sf.sigma_k(lam, k) == pytest.approx(brute, rel=1e-12, abs=1e-12)

    def test_batched(self):
        rng = np.random.default_rng(3)
        lam = rng.normal(size=(4, 5, 3))
        batch = sf.sigma_k(lam, 2)
        for i in range(4):
            for j in range(5):
                assert batch[i, j] == pytest.approx(sf.sigma_k(lam[i, j], 2))


class TestCone:
    def test_boundary(self):
        status = sf.cone_check([1.0, 1.0, -0.5])
        assert not status.in_cone
        assert status.margin == pytest.approx(0.0)

    def test_interior(self):
        status = sf.cone_check([2.0, 1.0, -0.5])
        assert status.in_cone
        assert status.margin == pytest.approx(0.5)
        status = sf.cone_check([1.0, 1.0, 1.0])
        assert status.in_cone
        assert status.margin == pytest.approx(3.0)

    def test_partial_sums_positive(self):
        # Gamma_2 implies every (n-1)-subsum of the spectrum is positive.
        rng = np.random.default_rng(11)
        for n in (2, 3, 4, 5):
            lam = sf.sample_gamma2_spectra(rng, n, 2000)
            subsums = lam.sum(axis=-1, keepdims=True) - lam
            assert subsums.min() > 0.0


class TestGeneralizedSpectrum:
    def test_identity_metric(self):
        a = np.array([[2.0, 1.0], [1.0, 2.0]])
        lam = sf.generalized_spectrum(a, np.eye(2))
        assert lam == pytest.approx([3.0, 1.0])

    def test_pencil_with_itself(self):
        rng = np.random.default_rng(5)
        g = sf.sample_gamma2_hermitian(rng, 3) + 4.0 * np.eye(3)
        lam = sf.generalized_spectrum(g, g)
        assert lam == pytest.approx(np.ones(3), abs=1e-12)

    def test_scaled_metric(self):
        a = np.array([[2.0, 1.0], [1.0, 2.0]])
        lam = sf.generalized_spectrum(a, 2.0 * np.eye(2))
        assert lam == pytest.approx([1.5, 0.5])

    def test_against_scipy_generalized_eig(self):
        rng = np.random.default_rng(17)
        for n in (2, 3, 4):
            g = sf.random_hermitian(rng, n) + 4.0 * np.eye(n)
            a = sf.random_hermitian(rng, n)
            lam = sf.generalized_spectrum(a, g)
            ref = scipy.linalg.eigh(a, g, eigvals_only=True)[::-1]
            assert lam == pytest.approx(ref, rel=1e-10, abs=1e-10)

    def test_not_positive_definite(self):
        with pytest.raises(ValueError):
            sf.generalized_spectrum(np.eye(2), np.diag([1.0, -1.0]))

    def test_invariants_match_eigenvalues(self):
        rng = np.random.default_rng(23)
        for n in (2, 3):
            g = sf.random_hermitian(rng, n) + 4.0 * np.eye(n)
            a = np.stack([sf.random_hermitian(rng, n) for _ in range(6)])
            lam = sf.generalized_spectrum(a, g)
            s1, s2 = sf.pencil_sigma12(a, np.linalg.inv(g))
            assert s1 == pytest.approx(lam.sum(axis=-1), rel=1e-11, abs=1e-11)
            assert s2 == pytest.approx(sf.sigma_k(lam, 2), rel=1e-10, abs=1e-10)


class TestSigma2Gradient:
    def test_known_values(self):
        assert sf.sigma2_gradient([3.0, 2.0, 1.0]) == pytest.approx([3.0, 4.0, 5.0])
        assert sf.sigma2_gradient([1.0, 1.0]) == pytest.approx([1.0, 1.0])
        assert sf.sigma2_gradient([2.0, 1.0, -0.5]) == pytest.approx([0.5, 1.5, 3.0])


class TestFTensor:
    def test_diagonal_case(self):
        a = np.diag([3.0, 2.0, 1.0]).astype(complex)
        ft = sf.F_tensor(a, np.eye(3))
        expected = np.diag([3.0, 4.0, 5.0]) / (2 * np.sqrt(11.0))
        assert ft.tensor == pytest.approx(expected, abs=1e-12)
        assert ft.trace == pytest.approx(6.0 / np.sqrt(11.0))

    def test_isotropic(self):
        ft = sf.F_tensor(np.eye(3), np.eye(3))
        assert ft.tensor == pytest.approx(np.eye(3) / np.sqrt(3.0), abs=1e-12)

    def test_unitary_equivariance(self):
        rng = np.random.default_rng(29)
        a = sf.sample_gamma2_hermitian(rng, 3)
        u = sf.random_unitary(rng, 3)
        rotated = sf.F_tensor(u @ a @ u.conj().T, np.eye(3)).tensor
        # F[a,b] = d sigma / d g'_{a-bar b} transforms like the conjugate
        # representation of its argument: F(U A U^H) = conj(U) F(A) conj(U)^H.
        expected = np.conj(u) @ sf.F_tensor(a, np.eye(3)).tensor @ np.conj(u).conj().T
        assert rotated == pytest.approx(expected, abs=1e-10)

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_matches_finite_differences(self, n):
        rng = np.random.default_rng(100 + n)
        for _ in range(25):
            g = sf.random_hermitian(rng, n, 0.2) + 2.0 * np.eye(n)
            a = sf.sample_gamma2_hermitian(rng, n, g=g)
            ft = sf.F_tensor(a, g)
            for e in hermitian_basis(n):
                fd = fd_sigma2_sqrt(a, g, e)
                exact = np.sum(ft.tensor * e).real
                assert exact == pytest.approx(fd, rel=2e-7, abs=2e-9)

    def test_trace_is_metric_contraction(self):
        rng = np.random.default_rng(31)
        g = sf.random_hermitian(rng, 3, 0.2) + 2.0 * np.eye(3)
        a = sf.sample_gamma2_hermitian(rng, 3, g=g)
        ft = sf.F_tensor(a, g)
        assert np.sum(ft.tensor * np.asarray(g)).real == pytest.approx(ft.trace, rel=1e-12)
        lam = sf.generalized_spectrum(a, g)
        n = 3
        assert ft.trace == pytest.approx(
            (n - 1) * lam.sum() / (2 * np.sqrt(sf.sigma_k(lam, 2))), rel=1e-12
        )

    def test_cone_error(self):
        a = np.diag([1.0, -2.0]).astype(complex)
        with pytest.raises(sf.ConeError):
            sf.F_tensor(a, np.eye(2))

    def test_uniform_ellipticity_inequality(self):
        # lam_1 * (sigma_1 - lam_1) >= (2/n) sigma_2 on Gamma_2, hence
        # min_i f_i = f_1 >= sigma_2^(1/2) / (n lam_1).
        rng = np.random.default_rng(37)
        for n in (2, 3, 4, 5):
            lam = sf.sample_gamma2_spectra(rng, n, 10**4)
            s1, s2 = sf.sigma1_sigma2(lam)
            lam1 = lam[:, 0]
            assert np.all(lam1 * (s1 - lam1) >= (2.0 / n) * s2 - 1e-12)
            f = (s1[:, None] - lam) / (2.0 * np.sqrt(s2)[:, None])
            assert np.all(f.min(axis=1) >= np.sqrt(s2) / (n * lam1) - 1e-12)


class TestSecondDerivativeForm:
    def test_isotropic_direction(self):
        t = np.diag([1.0, -1.0, 0.0]).astype(complex)
        q = sf.second_derivative_form(np.eye(3), t, np.eye(3))
        assert q == pytest.approx(-1.0 / np.sqrt(3.0), rel=1e-12)

    def test_zero_direction(self):
        rng = np.random.default_rng(41)
        a = sf.sample_gamma2_hermitian(rng, 3)
        assert sf.second_derivative_form(a, np.zeros((3, 3)), np.eye(3)) == 0.0

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_concavity_and_finite_differences(self, n):
        rng = np.random.default_rng(200 + n)
        for _ in range(25):
            g = sf.random_hermitian(rng, n, 0.2) + 2.0 * np.eye(n)
            a = sf.sample_gamma2_hermitian(rng, n, g=g)
            t = sf.random_hermitian(rng, n)
            q = sf.second_derivative_form(a, t, g)
            assert q <= 1e-12
            fd = fd_second_derivative(a, g, t)
            assert q == pytest.approx(fd, rel=5e-6, abs=5e-7)

    def test_degenerate_eigenvalues(self):
        # Repeated eigenvalues exercise the difference-quotient limit.
        a = np.diag([2.0, 2.0, 1.0]).astype(complex)
        rng = np.random.default_rng(43)
        t = sf.random_hermitian(rng, 3)
        q = sf.second_derivative_form(a, t, np.eye(3))
        fd = fd_second_derivative(a, np.eye(3), t)
        assert q == pytest.approx(fd, rel=5e-6, abs=5e-7)


class TestGarding:
    def test_equality_at_equal_arguments(self):
        lhs, rhs = sf.garding_pairing([1.0, 1.0, 1.0], [1.0, 1.0, 1.0])
        assert lhs == pytest.approx(6.0)
        assert rhs == pytest.approx(6.0)
        lhs, rhs = sf.garding_pairing([3.0, 2.0, 1.0], [3.0, 2.0, 1.0])
        assert lhs == pytest.approx(22.0)
        assert rhs == pytest.approx(22.0)

    def test_known_value(self):
        lhs, rhs = sf.garding_pairing([2.0, 1.0, -0.5], [1.0, 1.0, 1.0])
        assert lhs == pytest.approx(5.0)
        assert rhs == pytest.approx(2.0 * np.sqrt(1.5))

    def test_cone_error(self):
        with pytest.raises(sf.ConeError):
            sf.garding_pairing([1.0, -2.0], [1.0, 1.0])

    @pytest.mark.parametrize("n", [2, 3, 4, 5])
    def test_inequality_random(self, n):
        rng = np.random.default_rng(300 + n)
        lam = sf.sample_gamma2_spectra(rng, n, 10**4)
        mu = sf.sample_gamma2_spectra(rng, n, 10**4)
        lhs, rhs = sf.garding_pairing(lam, mu)
        assert np.all(lhs >= rhs - 1e-12)
        # equality at proportional arguments
        scale = np.abs(rng.normal(size=(10**3, 1))) + 0.1
        lhs, rhs = sf.garding_pairing(lam[: 10**3], scale * lam[: 10**3])
        assert np.max(np.abs(lhs - rhs) / np.maximum(1.0, rhs)) < 1e-10
