"""
Tests for operator spaces and the distribution closure.
"""

import numpy as np
import pytest

from errors import DimensionMismatchError
from analytics.distribution import ClosureCaps, OperatorSpace, generate_distribution, orthonormalize
from operators.algebra import (
    PAULI,
    HilbertFactorization,
    collective,
    hamming_weight,
    interior_projector,
    number_operator,
)
from operators.harmonic import HarmonicOperator, harmonic_commutator, harmonic_derivation
from data.fixtures import displacement_generator, random_harmonic, random_matrix, rotating_quadrature

OMEGA = 1.0
D = 10


@pytest.fixture
def oscillator_distribution():
    return generate_distribution(
        rotating_quadrature(D, OMEGA), OMEGA * number_operator(D), [displacement_generator(D)],
        projector=interior_projector(D),
    )


class TestOrthonormalize:
    """Gram-Schmidt over bucketed vectorizations."""

    def test_orthonormal_frame(self, gen):
        ops = [random_harmonic(3, gen) for _ in range(4)]
        space = orthonormalize(ops)
        assert len(space) == 4
        np.testing.assert_allclose(space.gram(), np.eye(4), atol=1e-12)

    def test_full_rank_random_set(self, gen):
        space = orthonormalize([random_matrix(4, gen) for _ in range(16)])
        assert len(space) == 16
        np.testing.assert_allclose(space.gram(), np.eye(16), atol=1e-10)

    def test_dependent_inputs_dropped(self, gen):
        A, B = random_matrix(3, gen), random_matrix(3, gen)
        space = orthonormalize([A, 2 * A, B, A - 3 * B])
        assert space.dimension == 2

    def test_different_frequencies_are_independent(self, gen):
        A = random_matrix(2, gen)
        space = orthonormalize([HarmonicOperator.rotating(1.0, A), HarmonicOperator.rotating(-1.0, A)])
        assert len(space) == 2
        assert space.buckets() == {-1.0: 1, 1.0: 1}

    def test_membership_and_projection(self, gen):
        A, B = random_matrix(3, gen), random_matrix(3, gen)
        space = orthonormalize([A, B])
        combo = HarmonicOperator.constant(2 * A - 1j * B)
        assert space.contains(combo)
        assert space.residual_norm(combo) <= 1e-10 * combo.norm()
        assert (space.project(combo) - combo).norm() <= 1e-10 * combo.norm()
        outside = HarmonicOperator.rotating(1.0, A)
        assert not space.contains(outside)
        assert space.residual_norm(outside) == pytest.approx(np.linalg.norm(A))

    def test_empty_inputs(self):
        space = orthonormalize([], dim=3)
        assert len(space) == 0
        assert space.dim == 3
        assert space.residual_norm(np.eye(3)) == pytest.approx(np.sqrt(3))

    def test_mixed_dimensions_rejected(self):
        with pytest.raises(DimensionMismatchError):
            orthonormalize([np.eye(2), np.eye(3)])

    def test_embedded(self, gen):
        fac = HilbertFactorization(2, 3)
        space = orthonormalize([PAULI["Z"], PAULI["X"]]).embedded(fac)
        assert space.dim == 6
        assert len(space) == 2
        assert space.contains(np.kron(PAULI["Z"], np.eye(3)))


class TestOscillatorDistribution:
    """Rotating quadrature of a truncated oscillator with a displacement control."""

    def test_control_substage(self):
        """[C, H1] = 2cos(ωt)·I on the interior levels."""
        C = rotating_quadrature(D, OMEGA)
        P = interior_projector(D)
        R = harmonic_commutator(C, displacement_generator(D)).compress(P)
        expected = HarmonicOperator([(1, P), (-1, P)])
        assert (R - expected).norm() <= 1e-10

    def test_quadrature_is_non_demolition(self):
        C = rotating_quadrature(D, OMEGA)
        assert harmonic_derivation(C, OMEGA * number_operator(D)).norm() <= 1e-10

    def test_stage_dimensions(self, oscillator_distribution):
        """span{C, cos·I} after the control sub-stage, e^{±iωt}·I after the derivation."""
        space, report = oscillator_distribution
        assert report.converged
        assert report.cap_hit is None
        assert report.per_stage_dims[:2] == (2, 3)
        assert report.final_dimension == 3 == len(space)

    def test_contents(self, oscillator_distribution):
        space, _ = oscillator_distribution
        P = interior_projector(D)
        cos_identity = HarmonicOperator([(1, P / 2), (-1, P / 2)])
        sin_identity = HarmonicOperator([(1, P / 2j), (-1, -P / 2j)])
        for op in (rotating_quadrature(D, OMEGA).compress(P), cos_identity, sin_identity):
            assert space.contains(op, 1e-10)
        assert set(space.frequencies) == {-1.0, 1.0}


class TestClosure:
    """Caps, degenerate inputs and threading."""

    def test_zero_observable(self):
        space, report = generate_distribution(np.zeros((2, 2)), PAULI["Z"])
        assert len(space) == 0
        assert report.converged
        assert report.note == "zero observable"

    def test_commuting_observable_is_one_dimensional(self):
        space, report = generate_distribution(PAULI["Z"], PAULI["Z"])
        assert len(space) == 1
        assert report.converged

    def test_dimension_cap(self):
        _, report = generate_distribution(
            rotating_quadrature(6), number_operator(6), [displacement_generator(6)],
            caps=ClosureCaps(max_dim=1),
        )
        assert not report.converged
        assert report.cap_hit == "max_dim"
        assert report.final_dimension == 1

    def test_caps_as_mapping(self):
        _, report = generate_distribution(PAULI["X"], PAULI["Z"], caps={"max_stage": 1, "max_ad_depth": 1})
        assert report.iterations == 1

    def test_stage_dims_monotone(self, gen):
        space, report = generate_distribution(random_matrix(3, gen), np.diag([1.0, 2.0, 4.0]),
                                              [np.diag([1.0, -1.0, 0.0])])
        dims = report.per_stage_dims
        assert all(a <= b for a, b in zip(dims, dims[1:]))
        assert dims[-1] == len(space)

    def test_threads_do_not_change_result(self):
        args = (rotating_quadrature(6), number_operator(6), [displacement_generator(6)])
        serial, _ = generate_distribution(*args, threads=1)
        parallel, _ = generate_distribution(*args, threads=3)
        assert len(serial) == len(parallel)
        for op in parallel.basis:
            assert serial.contains(op, 1e-8)

    def test_generator_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            generate_distribution(PAULI["X"], np.eye(3))

    def test_space_is_closed(self, gen):
        """Every basis element's images stay in the converged span."""
        H0 = np.diag([0.0, 1.0, 3.0])
        H1 = np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0]], dtype=complex)
        space, report = generate_distribution(HarmonicOperator.rotating(1.0, random_matrix(3, gen)), H0, [H1])
        assert report.converged
        for T in space.basis:
            assert space.contains(harmonic_derivation(T, H0), 1e-8)
            assert space.contains(harmonic_commutator(T, H1), 1e-8)

    def test_reseeding_adds_nothing(self, gen, controlled_model):
        H0 = np.diag([0.0, 1.0, 3.0])
        H1 = np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0]], dtype=complex)
        cases = [
            (HarmonicOperator.rotating(1.0, random_matrix(3, gen)), H0, [H1]),
            (controlled_model.observable, controlled_model.H0_sys, list(controlled_model.controls)),
        ]
        for C, drift, controls in cases:
            space, report = generate_distribution(C, drift, controls)
            assert report.converged
            first, *rest = space.basis
            again, _ = generate_distribution(first, drift, controls, extra_seeds=rest)
            assert len(again) == len(space)


class TestDephasingWeights:
    """Two qubits under H0 = (ω₀/2)(σ₃⊗I + I⊗σ₃) with no controls."""

    OMEGA0 = 1.0

    def _delta(self) -> np.ndarray:
        w = np.array([hamming_weight(i) for i in range(4)])
        return w[None, :] - w[:, None]

    def test_derivation_scales_by_weight_difference(self, gen):
        c = random_matrix(4, gen)
        H0 = self.OMEGA0 / 2 * collective(PAULI["Z"], 2)
        image = HarmonicOperator.constant(c)
        for k in range(4):
            np.testing.assert_allclose(image(0.0), c * (1j * self.OMEGA0 * self._delta()) ** k, atol=1e-10)
            image = harmonic_derivation(image, H0)

    def test_basis_follows_weight_pattern(self, gen):
        """Each basis element is c_ij·p(w(j) − w(i)) for one polynomial p."""
        c = random_matrix(4, gen)
        space, report = generate_distribution(c, self.OMEGA0 / 2 * collective(PAULI["Z"], 2))
        assert report.converged
        assert len(space) == 5
        delta = self._delta()
        for T in space.basis:
            ratio = T.component(0.0) / c
            for k in np.unique(delta):
                values = ratio[delta == k]
                np.testing.assert_allclose(values, values[0], atol=1e-8)

    def test_protected_coherence(self):
        C = np.zeros((4, 4), dtype=complex)
        C[1, 2] = 1.0
        space, _ = generate_distribution(C, self.OMEGA0 / 2 * collective(PAULI["Z"], 2))
        assert len(space) == 1
