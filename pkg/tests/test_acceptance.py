"""
End-to-end acceptance checks on the worked examples.

Each class covers one behaviour across the analysis stack; the unit suites
hold the finer-grained cases.
"""

import time
from dataclasses import replace

import numpy as np
import pytest

from analytics.dfs import find_invariant_interactions, find_invariant_observables, leakage_witness, verify_bracket_closure
from analytics.distribution import generate_distribution, orthonormalize
from analytics.invariance import (
    chains_agree_with,
    check_feedback,
    check_open_loop,
    oracle_error,
    sample_chain_values,
)
from dynamics.model import ScheduleLaw
from dynamics.propagation import invariance_experiment, model_distribution, propagate
from operators.algebra import commutator, interior_projector, number_operator
from operators.harmonic import HarmonicOperator, harmonic_commutator, harmonic_derivation
from data import fixtures

T_SPAN = (0.0, 10.0)
DT = 0.01


def _initial_state(name: str, model) -> np.ndarray:
    d_e = model.factorization.d_e
    if name == "oscillator":
        return fixtures.oscillator_initial_state(model.factorization.d_s, d_e)
    if name == "dephasing_unequal":
        return fixtures.bell_like_state(*fixtures.UNEQUAL_COHERENCE, d_e=d_e)
    return fixtures.bell_like_state(*fixtures.DFS_COHERENCE, d_e=d_e)


def _driven(model):
    """Fixtures with controls are simulated under a nonzero constant law."""
    if model.r:
        return replace(model, control_law=ScheduleLaw.constant([0.3] + [0.0] * (model.r - 1)))
    return model


class TestOscillatorExample:
    """Rotating quadrature with a displacement control on ten Fock levels."""

    def test_distribution_and_verdict(self):
        start = time.perf_counter()
        d = fixtures.OSCILLATOR_LEVELS
        P = interior_projector(d)
        C = fixtures.rotating_quadrature(d)
        H0 = fixtures.OMEGA * number_operator(d)
        H1 = fixtures.displacement_generator(d)

        space, report = generate_distribution(C, H0, [H1], projector=P)
        assert report.converged
        assert report.per_stage_dims[:2] == (2, 3)
        assert len(space) == 3
        cos_identity = HarmonicOperator([(1, P), (-1, P)])
        assert (harmonic_commutator(C, H1).compress(P) - cos_identity).norm() <= 1e-10
        assert harmonic_derivation(C, H0).norm() <= 1e-10

        model = fixtures.oscillator_model()
        projected, _ = model_distribution(model, projector=P)
        open_loop = check_open_loop(projected, model.H_SB, model.factorization)
        assert not open_loop.decoupled
        assert open_loop.witness is not None
        assert time.perf_counter() - start < 1.0


class TestDephasingCharacterization:
    """Equal-weight coherences and the three-qubit operator."""

    @pytest.mark.parametrize("n, expected", [(2, 6), (3, 20), (4, 70)])
    def test_dimensions(self, n, expected):
        S = fixtures.dephasing_operator(n)
        start = time.perf_counter()
        space = find_invariant_observables(fixtures.OMEGA0 / 2 * S, (), [S])
        assert space.dimension == expected
        assert time.perf_counter() - start < 10.0
        if n == 3:
            assert space.residual(fixtures.n3_observable()) <= 1e-10


class TestControlLeakage:
    def test_flip_controls_eject_coherence(self):
        S = fixtures.dephasing_operator(2)
        H0 = fixtures.OMEGA0 / 2 * S
        C = fixtures.coherence(*fixtures.DFS_COHERENCE)
        assert find_invariant_observables(H0, (), [S]).contains(C)
        assert not find_invariant_observables(H0, fixtures.flip_controls(2), [S]).contains(C)
        witness = leakage_witness(C, H0, fixtures.flip_controls(2), [S])
        assert witness.describe() == "[[C,H1],S1]"
        assert witness.norm > 0.1


class TestChainCrossCheck:
    """Closed-form chains against finite differences, and against the verdict."""

    @pytest.mark.parametrize("name", sorted(fixtures.fixture_models()))
    def test_fixture(self, name):
        model, decoupled = fixtures.fixture_models()[name]
        space, _ = model_distribution(model)
        report = check_open_loop(space, model.H_SB, model.factorization)
        assert report.decoupled is decoupled
        frame = sample_chain_values(model, max_length=3, n_states=20, n_times=5, with_oracle=True, threads=2)
        assert oracle_error(frame) <= 1e-6
        assert chains_agree_with(report, frame)


class TestSimulationAgreement:
    """Interaction on/off trajectories against the algebraic verdict."""

    def test_dephasing_register(self, dfs_model, unequal_model):
        start = time.perf_counter()
        protected = propagate(dfs_model, _initial_state("dephasing_dfs", dfs_model), T_SPAN, DT)
        protected_off = propagate(dfs_model, _initial_state("dephasing_dfs", dfs_model), T_SPAN, DT,
                                  interaction_on=False)
        exposed = invariance_experiment(unequal_model, [_initial_state("dephasing_unequal", unequal_model)],
                                        T_SPAN, DT)
        assert np.max(np.abs(protected.outputs - protected_off.outputs)) <= 1e-8
        assert exposed.max_deviation > 1e-3
        assert protected.max_norm_defect <= 1e-9
        assert time.perf_counter() - start < 30.0

    @pytest.mark.parametrize("name", sorted(fixtures.fixture_models()))
    def test_verdicts_agree(self, name):
        model, decoupled = fixtures.fixture_models()[name]
        report = invariance_experiment(_driven(model), [_initial_state(name, model)], T_SPAN, DT)
        assert report.algebraic.decoupled is decoupled
        assert report.agreement


class TestFeedbackCondition:
    def test_interaction_as_control(self):
        model = fixtures.feedback_model()
        space, report = generate_distribution(model.joint_observable, model.joint_drift,
                                              (*model.joint_control_matrices, model.H_SB(0.0)))
        assert report.converged
        assert check_feedback(space, model.H_SB, model.factorization).decoupled

    def test_three_qubit_operator(self):
        """Open-loop decoupled implies the feedback condition on the joint space."""
        model = fixtures.dephasing_model(3, fixtures.n3_observable(), name="dephasing_n3")
        system_space, _ = model_distribution(model)
        joint_space, _ = generate_distribution(model.joint_observable, model.joint_drift,
                                               model.joint_control_matrices)
        assert check_open_loop(system_space, model.H_SB, model.factorization).decoupled
        assert check_feedback(joint_space, model.H_SB, model.factorization).decoupled

    def test_system_only_embedding(self, unequal_model):
        space = orthonormalize([fixtures.coherence("00", "11")])
        assert not check_feedback(space, unequal_model.H_SB, unequal_model.factorization).decoupled


class TestBracketClosure:
    @pytest.mark.parametrize("name", sorted(fixtures.fixture_models()))
    def test_invariant_interactions_close(self, name, gen):
        model, _ = fixtures.fixture_models()[name]
        kwargs = dict(factorization=model.factorization, H_env=model.H_env)
        space = find_invariant_interactions(model.observable, model.H0_sys, model.controls, **kwargs)
        assert verify_bracket_closure(space, model.H0_sys, model.controls, **kwargs)

        D = model.factorization.dim
        if len(space) < D * D:
            perturbed = orthonormalize([*space.basis, fixtures.random_hermitian(D, gen)])
            assert not verify_bracket_closure(perturbed, model.H0_sys, model.controls, **kwargs)


class TestNumericalHygiene:
    def test_jacobi_identity(self, gen):
        A, B, C = (fixtures.random_matrix(4, gen) for _ in range(3))
        total = commutator(A, commutator(B, C)) + commutator(B, commutator(C, A)) + commutator(C, commutator(A, B))
        scale = np.linalg.norm(A) * np.linalg.norm(B) * np.linalg.norm(C)
        assert np.linalg.norm(total) <= 1e-12 * scale

    def test_derivation_is_leibniz(self, gen):
        H0 = fixtures.random_hermitian(3, gen)
        A, B = fixtures.random_harmonic(3, gen), fixtures.random_harmonic(3, gen)
        lhs = harmonic_derivation(harmonic_commutator(A, B), H0)
        rhs = (harmonic_commutator(harmonic_derivation(A, H0), B)
               + harmonic_commutator(A, harmonic_derivation(B, H0)))
        assert (lhs - rhs).norm() <= 1e-12 * max(1.0, lhs.norm())

    def test_unitarity(self, controlled_model):
        model = replace(controlled_model, control_law=ScheduleLaw((0.0, 1.0), [[0.4, 0.0], [0.0, -0.2]]))
        trace = propagate(model, fixtures.bell_like_state(*fixtures.DFS_COHERENCE, d_e=3), (0.0, 2.0), DT)
        assert trace.max_norm_defect <= 1e-9
