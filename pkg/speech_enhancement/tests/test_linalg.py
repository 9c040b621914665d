import numpy as np
from numpy.testing import assert_allclose
from django.test import SimpleTestCase

from speech_enhancement.dsp import linalg
from speech_enhancement.exceptions import DegenerateMatrixError, InvalidInputError, SingularMatrixError


def random_psd(rng, m, rank=None):
    rank = m if rank is None else rank
    a = rng.standard_normal((m, rank)) + 1j * rng.standard_normal((m, rank))
    return a @ a.conj().T + (1e-3 * np.eye(m) if rank == m else 0)


def rel_fro(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


class HermitianEigTests(SimpleTestCase):
    def test_diagonal(self):
        values, vectors = linalg.hermitian_eig(np.diag([1.0, 2.0]).astype(complex))
        assert_allclose(values, [2.0, 1.0])
        assert_allclose(np.abs(vectors), [[0, 1], [1, 0]], atol=1e-12)

    def test_complex_two_by_two(self):
        a = np.array([[2, 1j], [-1j, 2]])
        values, vectors = linalg.hermitian_eig(a)
        assert_allclose(values, [3.0, 1.0], atol=1e-12)
        v = vectors[:, 0]
        assert_allclose(a @ v, 3 * v, atol=1e-12)

    def test_reconstruction_and_orthonormality(self):
        rng = np.random.default_rng(3)
        for m in range(1, 7):
            a = random_psd(rng, m)
            values, vectors = linalg.hermitian_eig(a)
            self.assertTrue(np.all(np.diff(values) <= 0))
            rebuilt = (vectors * values) @ vectors.conj().T
            self.assertLess(rel_fro(rebuilt, a), 1e-9)
            assert_allclose(vectors.conj().T @ vectors, np.eye(m), atol=1e-9)

    def test_rejects_non_hermitian(self):
        with self.assertRaises(InvalidInputError):
            linalg.hermitian_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_rejects_non_square(self):
        with self.assertRaises(InvalidInputError):
            linalg.hermitian_eig(np.ones((2, 3)))


class PrincipalEigenvectorTests(SimpleTestCase):
    def test_diagonal(self):
        assert_allclose(linalg.principal_eigenvector(np.diag([2.0, 1.0])), [1, 0], atol=1e-12)

    def test_rank_one_phase_fixed(self):
        p = np.array([1, 1j]) / np.sqrt(2)
        v = linalg.principal_eigenvector(4 * np.outer(p, p.conj()), anchor=0)
        assert_allclose(v, p, atol=1e-12)

    def test_anchor_entry_real_nonnegative(self):
        rng = np.random.default_rng(5)
        a = np.stack([random_psd(rng, 4) for _ in range(8)])
        for anchor in range(4):
            v = linalg.principal_eigenvector(a, anchor=anchor)
            assert_allclose(np.imag(v[:, anchor]), 0, atol=1e-12)
            self.assertTrue(np.all(np.real(v[:, anchor]) >= 0))
            assert_allclose(np.linalg.norm(v, axis=-1), 1, atol=1e-12)

    def test_vanishing_anchor_falls_back_to_largest_entry(self):
        p = np.array([0, 1j, 0.5j])
        v = linalg.principal_eigenvector(np.outer(p, p.conj()), anchor=0)
        self.assertAlmostEqual(np.imag(v[1]), 0.0, places=12)
        self.assertGreater(np.real(v[1]), 0)

    def test_identity_is_deterministic(self):
        first = linalg.principal_eigenvector(np.eye(2))
        second = linalg.principal_eigenvector(np.eye(2))
        self.assertTrue(np.array_equal(first, second))
        self.assertAlmostEqual(np.linalg.norm(first), 1.0)
        self.assertGreaterEqual(np.real(first[0]), 0)

    def test_zero_matrix_is_degenerate(self):
        with self.assertRaises(DegenerateMatrixError):
            linalg.principal_eigenvector(np.zeros((2, 2)))


class RootsAndInverseTests(SimpleTestCase):
    def test_known_values(self):
        assert_allclose(linalg.matrix_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-12)
        assert_allclose(linalg.inverse(np.eye(3)), np.eye(3), atol=1e-12)
        assert_allclose(linalg.matrix_inv_sqrt(np.diag([4.0, 16.0])), np.diag([0.5, 0.25]), atol=1e-12)

    def test_random_identities(self):
        rng = np.random.default_rng(11)
        for m in (2, 3, 5):
            a = random_psd(rng, m)
            root = linalg.matrix_sqrt(a)
            self.assertLess(rel_fro(root @ root, a), 1e-9)
            assert_allclose(linalg.matrix_inv_sqrt(a) @ root, np.eye(m), atol=1e-8)
            assert_allclose(linalg.inverse(a) @ a, np.eye(m), atol=1e-8)

    def test_zero_matrix_is_singular(self):
        with self.assertRaises(SingularMatrixError):
            linalg.inverse(np.zeros((2, 2)))

    def test_inverse_and_logdet(self):
        inv, logdet = linalg.inverse_and_logdet(np.diag([2.0, 8.0]))
        assert_allclose(inv, np.diag([0.5, 0.125]), atol=1e-12)
        self.assertAlmostEqual(float(logdet), np.log(16.0))

    def test_inverse_and_logdet_matches_eigendecomposition(self):
        rng = np.random.default_rng(5)
        stack = np.stack([random_psd(rng, 3) for _ in range(6)])
        inv, logdet = linalg.inverse_and_logdet(stack)
        assert_allclose(inv, linalg.inverse(stack), rtol=1e-9, atol=1e-9)
        assert_allclose(logdet, np.linalg.slogdet(stack)[1], rtol=1e-10)

    def test_inverse_and_logdet_floors_ill_conditioned_bins(self):
        stack = np.stack([np.diag([2.0, 8.0]), np.diag([1.0, 1e-14])])
        inv, logdet = linalg.inverse_and_logdet(stack)
        assert_allclose(inv[0], np.diag([0.5, 0.125]), atol=1e-12)
        assert_allclose(inv[1], np.diag([1.0, 1e10]), rtol=1e-9)
        assert_allclose(logdet, [np.log(16.0), np.log(1e-10)], rtol=1e-9)

    def test_inverse_and_logdet_indefinite_input(self):
        inv, logdet = linalg.inverse_and_logdet(np.diag([1.0, -1.0]))
        assert_allclose(inv, np.diag([1.0, 1e10]), rtol=1e-9)
        self.assertAlmostEqual(float(logdet), np.log(1e-10))
        with self.assertRaises(SingularMatrixError):
            linalg.inverse_and_logdet(np.zeros((2, 2)))

    def test_regularize_loads_diagonal(self):
        loaded = linalg.regularize(np.diag([2.0, 4.0]), relative=0.5)
        assert_allclose(loaded, np.diag([3.5, 5.5]))


class GeometricMeanTests(SimpleTestCase):
    def test_scalars(self):
        one = np.ones((1, 1))
        assert_allclose(linalg.geometric_mean_update(one, 4 * one, one), [[2.0]])
        assert_allclose(linalg.geometric_mean_update(one, 9 * one, 4 * one), [[1.5]])
        assert_allclose(linalg.geometric_mean_update(3 * one, 2 * one, 2 * one), [[3.0]])

    def test_riccati_residual(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            m = rng.integers(1, 5)
            g_old, phi, psi = (random_psd(rng, m) for _ in range(3))
            g = linalg.geometric_mean_update(g_old, phi, psi)
            target = g_old @ phi @ g_old
            self.assertLess(rel_fro(g @ psi @ g, target), 1e-8)
            assert_allclose(g, g.conj().T, atol=1e-10)

    def test_commuting_inputs(self):
        phi = np.diag([4.0, 9.0, 1.0])
        psi = np.diag([1.0, 4.0, 16.0])
        g = linalg.geometric_mean_update(np.eye(3), phi, psi)
        assert_allclose(g, np.diag(np.sqrt([4.0, 9.0 / 4.0, 1.0 / 16.0])), atol=1e-9)

    def test_fixed_point_when_phi_equals_psi(self):
        rng = np.random.default_rng(2)
        g_old, phi = random_psd(rng, 3), random_psd(rng, 3)
        g = linalg.geometric_mean_update(g_old, phi, phi)
        self.assertLess(rel_fro(g @ phi @ g, g_old @ phi @ g_old), 1e-8)


class TraceProductTests(SimpleTestCase):
    def test_values(self):
        self.assertAlmostEqual(float(linalg.trace_product(np.eye(2), np.eye(2))), 2.0)
        self.assertAlmostEqual(float(linalg.trace_product(np.diag([1.0, 2.0]), np.diag([3.0, 4.0]))), 11.0)
        p = np.array([1.0, 0.0])
        q = np.array([1.0, 1.0]) / np.sqrt(2)
        self.assertAlmostEqual(float(linalg.trace_product(np.outer(p, p), np.outer(q, q))), 0.5)

    def test_dimension_mismatch(self):
        with self.assertRaises(InvalidInputError):
            linalg.trace_product(np.eye(2), np.eye(3))
