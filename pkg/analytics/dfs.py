"""
Inverse problem: observables and interactions that stay decoupled.

Operators are vectorized row-major, so ad_S(M) = [M, S] becomes
(I ⊗ Sᵀ − S ⊗ I)·vec(M). The invariant-observable space is the largest
subspace of ∩ₖ ker ad_{Sₖ} that ad_{H0} and every ad_{Hᵢ} map into itself.
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import svd

from config import RANK_TOL, thread_pool
from errors import DecompositionError, DimensionMismatchError
from analytics.distribution import OperatorSpace, generate_distribution
from operators.algebra import HilbertFactorization, as_matrix, coherence_label, commutator
from operators.harmonic import HarmonicOperator

logger = logging.getLogger(__name__)


# ── Superoperators ────────────────────────────────────────────────────────────

def ad_superoperator(S) -> np.ndarray:
    """Matrix of M ↦ [M, S] on row-major vec(M)."""
    S = as_matrix(S)
    I = np.eye(S.shape[0])
    return np.kron(I, S.T) - np.kron(S, I)


def left_commutator_superoperator(M) -> np.ndarray:
    """Matrix of X ↦ [M, X] on row-major vec(X)."""
    M = as_matrix(M)
    I = np.eye(M.shape[0])
    return np.kron(M, I) - np.kron(I, M.T)


def _kernel(A: np.ndarray, tol: float) -> np.ndarray:
    """Orthonormal basis of {v : Av ≈ 0}; singular values ≤ tol·max(1, σ_max) count as zero."""
    rows, n = A.shape
    if rows < n:
        A = np.vstack([A, np.zeros((n - rows, n), dtype=A.dtype)])
    _, s, Vh = svd(A, full_matrices=False)
    rank = int(np.sum(s > tol * max(1.0, s[0] if len(s) else 0.0)))
    return Vh[rank:].conj().T


def _row_basis(A: np.ndarray, tol: float) -> np.ndarray:
    """Orthonormal rows spanning the numerical row space of A."""
    if not A.shape[0]:
        return A
    _, s, Vh = svd(A, full_matrices=False)
    rank = int(np.sum(s > tol * max(1.0, s[0])))
    return Vh[:rank]


def _is_diagonal(M, tol: float) -> bool:
    return np.linalg.norm(M - np.diag(np.diag(M))) <= tol


def _operator_label(i: int, j: int, d: int) -> str:
    n_bits = d.bit_length() - 1
    if 2 ** n_bits == d:
        return coherence_label(i, j, n_bits)
    return f"|{i}><{j}|"


# ── Invariant observables ─────────────────────────────────────────────────────

@dataclass(frozen=True)
class GeneratorRecord:
    H0: np.ndarray
    controls: Tuple[np.ndarray, ...]
    factors: Tuple[np.ndarray, ...]


@dataclass(frozen=True)
class InvariantObservableSpace:
    """Observables whose every ad-image commutes with the interaction factors."""

    frame: np.ndarray
    generators_used: GeneratorRecord
    iterations: int
    per_iteration_dims: Tuple[int, ...] = ()
    labels: Optional[Tuple[str, ...]] = None
    tol: float = RANK_TOL
    _basis: Tuple[np.ndarray, ...] = field(default=(), repr=False)

    @property
    def dim(self) -> int:
        return self.generators_used.H0.shape[0]

    @property
    def dimension(self) -> int:
        return self.frame.shape[1]

    @property
    def basis(self) -> Tuple[np.ndarray, ...]:
        if not self._basis and self.dimension:
            mats = tuple(self.frame[:, j].reshape(self.dim, self.dim) for j in range(self.dimension))
            object.__setattr__(self, "_basis", mats)
        return self._basis

    def residual(self, M) -> float:
        M = as_matrix(M)
        if M.shape[0] != self.dim:
            raise DimensionMismatchError(f"operator has dim {M.shape[0]}, space has dim {self.dim}")
        v = M.reshape(-1)
        if self.dimension:
            v = v - self.frame @ (self.frame.conj().T @ v)
        return float(np.linalg.norm(v))

    def contains(self, M, tol: Optional[float] = None) -> bool:
        tol = self.tol if tol is None else tol
        return self.residual(M) <= tol * np.linalg.norm(M)

    def as_operator_space(self) -> OperatorSpace:
        return OperatorSpace.from_matrices(self.dim, self.frame, rank_tol=self.tol)


def _require_factors(factors, d: int) -> Tuple[np.ndarray, ...]:
    if factors is None:
        raise DecompositionError("inverse solver needs the system factors Sₖ of H_SB = Σ Sₖ ⊗ Bₖ")
    if isinstance(factors, HarmonicOperator) or np.ndim(factors) == 2:
        raise DecompositionError("pass the interaction as a list of system factors, not a single operator")
    out = tuple(as_matrix(S) for S in factors)
    if not out:
        raise DecompositionError("interaction decomposition is empty")
    for S in out:
        if S.shape[0] != d:
            raise DimensionMismatchError(f"system factor has dim {S.shape[0]}, drift has dim {d}")
    return out


def _canonical_frame(Q: np.ndarray, d: int, tol: float):
    """Elementary |i⟩⟨j| basis when the span is coordinate-aligned, else None."""
    weights = np.sum(np.abs(Q) ** 2, axis=1)
    picked = np.flatnonzero(weights >= 1 - np.sqrt(tol))
    if len(picked) != Q.shape[1]:
        return None
    E = np.zeros((d * d, len(picked)), dtype=complex)
    E[picked, np.arange(len(picked))] = 1.0
    labels = tuple(_operator_label(*divmod(int(k), d), d) for k in picked)
    return E, labels


def find_invariant_observables(H0, controls: Sequence = (), interaction_system_factors=None,
                               tol: float = RANK_TOL) -> InvariantObservableSpace:
    """Largest ad_{H0}, ad_{Hᵢ}-invariant subspace of ∩ₖ ker ad_{Sₖ}.

    Iterates Vₙ₊₁ = {v ∈ Vₙ : A v ∈ Vₙ for every generator superoperator A}
    from V₀ = ∩ₖ ker ad_{Sₖ}; each pass either shrinks the space or stops.
    """
    H0 = as_matrix(H0)
    d = H0.shape[0]
    controls = tuple(as_matrix(H) for H in controls)
    for H in controls:
        if H.shape[0] != d:
            raise DimensionMismatchError(f"control has dim {H.shape[0]}, drift has dim {d}")
    factors = _require_factors(interaction_system_factors, d)

    Q = _kernel(np.vstack([ad_superoperator(S) for S in factors]), tol)
    generators = [ad_superoperator(H) for H in (H0, *controls)]
    dims = [Q.shape[1]]
    iterations = 0
    while Q.shape[1]:
        iterations += 1
        leak = np.vstack([A @ Q - Q @ (Q.conj().T @ (A @ Q)) for A in generators])
        N = _kernel(leak, tol)
        logger.debug("fixed-point pass %d: dim %d -> %d", iterations, Q.shape[1], N.shape[1])
        if N.shape[1] == Q.shape[1]:
            break
        Q = Q @ N
        dims.append(Q.shape[1])

    labels = None
    if all(_is_diagonal(M, tol) for M in (H0, *controls, *factors)) and Q.shape[1]:
        canonical = _canonical_frame(Q, d, tol)
        if canonical is not None:
            Q, labels = canonical

    Q.flags.writeable = False
    logger.info("invariant observable space has dimension %d after %d passes", Q.shape[1], iterations)
    return InvariantObservableSpace(
        frame=Q,
        generators_used=GeneratorRecord(H0, controls, factors),
        iterations=iterations,
        per_iteration_dims=tuple(dims),
        labels=labels,
        tol=tol,
    )


def brute_force_invariant_observables(H0, controls: Sequence = (), interaction_system_factors=None,
                                      max_word: int = 6, tol: float = RANK_TOL) -> InvariantObservableSpace:
    """Null space of ad_{Sₖ}∘ad_w stacked over every ad-word w up to `max_word`."""
    H0 = as_matrix(H0)
    d = H0.shape[0]
    factors = _require_factors(interaction_system_factors, d)
    generators = [ad_superoperator(H) for H in (H0, *map(as_matrix, controls))]

    level = _row_basis(np.vstack([ad_superoperator(S) for S in factors]), tol)
    rows = [level]
    for _ in range(max_word):
        if not level.shape[0]:
            break
        level = _row_basis(np.vstack([level @ A for A in generators]), tol)
        rows.append(level)
    Q = _kernel(np.vstack(rows), tol)
    Q.flags.writeable = False
    return InvariantObservableSpace(
        frame=Q,
        generators_used=GeneratorRecord(H0, tuple(map(as_matrix, controls)), factors),
        iterations=max_word,
        tol=tol,
    )


@dataclass(frozen=True)
class LeakageWitness:
    """An ad-word whose image of M fails to commute with factor Sₖ."""

    word: Tuple[str, ...]
    factor_index: int
    norm: float

    def describe(self) -> str:
        inner = "C"
        for g in self.word:
            inner = f"[{inner},{g}]"
        return f"[{inner},S{self.factor_index + 1}]"


def leakage_witness(M, H0, controls: Sequence = (), interaction_system_factors=None,
                    max_word: int = 6, tol: float = RANK_TOL) -> Optional[LeakageWitness]:
    """First word (breadth first, drift before controls) that leaks M out of the commutant."""
    M = as_matrix(M)
    H0 = as_matrix(H0)
    factors = _require_factors(interaction_system_factors, H0.shape[0])
    gens = [("H0", H0)] + [(f"H{i}", as_matrix(H)) for i, H in enumerate(controls, start=1)]
    threshold = tol * max(1.0, float(np.linalg.norm(M)))

    images: Dict[Tuple[int, ...], np.ndarray] = {(): M}
    for length in range(max_word + 1):
        for word in itertools.product(range(len(gens)), repeat=length):
            if length:
                images[word] = commutator(images[word[:-1]], gens[word[-1]][1])
            image = images[word]
            for k, S in enumerate(factors):
                norm = float(np.linalg.norm(commutator(image, S)))
                if norm > threshold:
                    return LeakageWitness(tuple(gens[g][0] for g in word), k, norm)
    return None


# ── Invariant interactions ────────────────────────────────────────────────────

def _joint_generators(H0, controls, factorization: Optional[HilbertFactorization], H_env):
    H0 = as_matrix(H0)
    controls = [as_matrix(H) for H in controls]
    if factorization is None:
        return H0, controls
    He = np.zeros((factorization.d_e,) * 2, dtype=complex) if H_env is None else as_matrix(H_env)
    drift = factorization.embed_system(H0) + factorization.embed_env(He)
    return drift, [factorization.lift(H) for H in controls]


def find_invariant_interactions(C, H0, controls: Sequence = (), tol: float = RANK_TOL,
                                factorization: Optional[HilbertFactorization] = None,
                                H_env=None, caps=None, threads: int = 1) -> OperatorSpace:
    """Time-independent H_τ commuting with every element of the distribution of C.

    With a factorization, candidates live on the joint space and the
    distribution elements enter as T ⊗ I_e.
    """
    distribution, _ = generate_distribution(C, H0, controls, caps, threads=threads)
    embed = (lambda M: M) if factorization is None else factorization.lift
    D = distribution.dim if factorization is None else factorization.dim

    blocks = [
        left_commutator_superoperator(embed(M))
        for T in distribution.basis
        for M in T.matrices
    ]
    if blocks:
        N = _kernel(np.vstack(blocks), tol)
    else:
        N = np.eye(D * D, dtype=complex)
    logger.info("invariant interaction space has dimension %d", N.shape[1])
    return OperatorSpace.from_matrices(D, N, rank_tol=tol)


def bracket_closure_residuals(space: OperatorSpace, H0, controls: Sequence = (),
                              factorization: Optional[HilbertFactorization] = None,
                              H_env=None, threads: int = 1) -> List[float]:
    """Relative projection residual of [H_τ, X] for every basis H_τ and generator X."""
    drift, joint_controls = _joint_generators(H0, controls, factorization, H_env)
    generators = [drift, *joint_controls]
    if generators[0].shape[0] != space.dim:
        raise DimensionMismatchError(f"generators have dim {generators[0].shape[0]}, space has dim {space.dim}")

    def residuals(H_tau: HarmonicOperator) -> List[float]:
        out = []
        for X in generators:
            R = HarmonicOperator.constant(commutator(H_tau.component(0.0), X))
            out.append(space.residual_norm(R) / max(1.0, R.norm()))
        return out

    with thread_pool(threads) as pool:
        blocks = list(pool.map(residuals, space.basis))
    return [r for block in blocks for r in block]


def verify_bracket_closure(space: OperatorSpace, H0, controls: Sequence = (), tol: float = RANK_TOL,
                           factorization: Optional[HilbertFactorization] = None,
                           H_env=None, threads: int = 1) -> bool:
    """True iff [H_τ, H0] and every [H_τ, Hᵢ] stay in the space."""
    residuals = bracket_closure_residuals(space, H0, controls, factorization, H_env, threads)
    worst = max(residuals, default=0.0)
    logger.info("bracket closure worst residual %.3g", worst)
    return worst <= tol
