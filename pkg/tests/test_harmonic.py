"""
Tests for harmonic operators: canonical form, arithmetic and the derivation.
"""

import numpy as np
import pytest

from errors import DimensionMismatchError
from operators.algebra import PAULI, boson_annihilate, commutator, number_operator
from operators.harmonic import HarmonicOperator, as_harmonic, harmonic_commutator, harmonic_derivation
from data.fixtures import random_harmonic, random_hermitian, random_matrix, rotating_quadrature


def _close(A: HarmonicOperator, B: HarmonicOperator, tol: float = 1e-12) -> bool:
    return (A - B).norm() <= tol * max(1.0, A.norm(), B.norm())


class TestCanonicalForm:
    """Merging, dropping and views."""

    def test_equal_frequencies_merge(self, gen):
        A, B = random_matrix(3, gen), random_matrix(3, gen)
        op = HarmonicOperator([(1, A), (1, B), (-2, A)])
        assert len(op) == 2
        assert op.frequencies == (-2.0, 1.0)
        np.testing.assert_allclose(op.component(1.0), A + B)

    def test_small_terms_dropped(self, gen):
        A = random_matrix(3, gen)
        op = HarmonicOperator([(0, A), (3, 1e-14 * A)])
        assert op.is_constant
        assert op.frequencies == (0.0,)

    def test_cancellation_leaves_zero(self, gen):
        A = random_matrix(3, gen)
        op = HarmonicOperator.rotating(2.0, A) - HarmonicOperator.rotating(2.0, A)
        assert len(op) == 0
        assert op.is_zero()
        np.testing.assert_allclose(op(0.3), np.zeros((3, 3)))

    def test_evaluate(self, gen):
        A, B = random_matrix(3, gen), random_matrix(3, gen)
        op = HarmonicOperator([(0.5, A), (-1.5, B)])
        t = 0.7
        np.testing.assert_allclose(op(t), np.exp(0.5j * t) * A + np.exp(-1.5j * t) * B)

    def test_component_absent_is_zero(self, gen):
        op = HarmonicOperator.constant(random_matrix(2, gen))
        np.testing.assert_allclose(op.component(4.0), np.zeros((2, 2)))

    def test_constant_accepts_explicit_dim(self, gen):
        A = random_matrix(3, gen)
        op = HarmonicOperator.constant(A, dim=3)
        assert op.dim == 3
        np.testing.assert_allclose(op(1.0), A)
        with pytest.raises(DimensionMismatchError):
            HarmonicOperator.constant(A, dim=4)

    def test_mixed_terms_dimension_rejected(self):
        with pytest.raises(DimensionMismatchError):
            HarmonicOperator([(0, np.eye(2)), (1, np.eye(3))])
        with pytest.raises(DimensionMismatchError):
            as_harmonic(1.0)

    def test_rebasing_keeps_values(self, gen):
        A, B = random_matrix(2, gen), random_matrix(2, gen)
        total = HarmonicOperator.rotating(0.5, A) + HarmonicOperator.rotating(1.0, B)
        assert total.frequencies == (0.5, 1.0)
        np.testing.assert_allclose(total(1.3), np.exp(0.65j) * A + np.exp(1.3j) * B)


class TestArithmetic:
    """Sums, adjoints, commutators."""

    def test_dag_and_hermiticity(self):
        C = rotating_quadrature(5)
        assert C.is_hermitian(1e-12)
        assert _close(C.dag(), C)
        np.testing.assert_allclose(C(0.4), C(0.4).conj().T, atol=1e-12)

    def test_commutator_frequencies_add(self, gen):
        A, B = random_matrix(3, gen), random_matrix(3, gen)
        R = harmonic_commutator(HarmonicOperator.rotating(1.0, A), HarmonicOperator.rotating(-1.0, B))
        assert R.is_constant
        np.testing.assert_allclose(R.component(0.0), commutator(A, B))

    def test_commutator_matches_pointwise(self, gen):
        A, B = random_harmonic(3, gen), random_harmonic(3, gen)
        t = 0.37
        np.testing.assert_allclose(harmonic_commutator(A, B)(t), commutator(A(t), B(t)), atol=1e-10)

    def test_jacobi(self, gen):
        A, B, C = (random_harmonic(3, gen) for _ in range(3))
        total = (harmonic_commutator(A, harmonic_commutator(B, C))
                 + harmonic_commutator(B, harmonic_commutator(C, A))
                 + harmonic_commutator(C, harmonic_commutator(A, B)))
        assert total.norm() <= 1e-12 * A.norm() * B.norm() * C.norm()

    def test_time_derivative(self, gen):
        A = random_matrix(2, gen)
        op = HarmonicOperator.rotating(2.0, A).time_derivative()
        np.testing.assert_allclose(op.component(2.0), 2j * A)


class TestDerivation:
    """(ad_{H0} + ∂/∂t) with the generator -iH0."""

    def test_rotating_quadrature_is_annihilated(self):
        """a·e^{iωt} + a†·e^{-iωt} is non-demolition under H0 = ω a†a."""
        for omega in (1.0, 2.5):
            C = rotating_quadrature(8, omega)
            D = harmonic_derivation(C, omega * number_operator(8))
            assert D.norm() <= 1e-10

    def test_commuting_term_gains_i_mu(self):
        """(μ, M) with [M, H0] = 0 maps to (μ, iμM)."""
        M = PAULI["Z"]
        D = harmonic_derivation(HarmonicOperator.rotating(3.0, M), PAULI["Z"])
        np.testing.assert_allclose(D.component(3.0), 3j * M)

    def test_constant_term_is_commutator(self, gen):
        M, H = random_matrix(3, gen), random_hermitian(3, gen)
        D = harmonic_derivation(M, H)
        np.testing.assert_allclose(D.component(0.0), commutator(M, -1j * H))

    def test_leibniz_rule(self, gen):
        """D[A, B] = [DA, B] + [A, DB] to 1e-12 relative."""
        A, B = random_harmonic(3, gen), random_harmonic(3, gen)
        H = random_hermitian(3, gen)
        lhs = harmonic_derivation(harmonic_commutator(A, B), H)
        rhs = harmonic_commutator(harmonic_derivation(A, H), B) + harmonic_commutator(A, harmonic_derivation(B, H))
        assert (lhs - rhs).norm() <= 1e-12 * max(1.0, lhs.norm(), rhs.norm()) * 10

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            harmonic_derivation(np.eye(2), np.eye(3))

    def test_boson_ladder_commutator(self):
        """[a, a†a] = a holds exactly under truncation."""
        a = boson_annihilate(5)
        np.testing.assert_allclose(commutator(a, number_operator(5)), a, atol=1e-12)
