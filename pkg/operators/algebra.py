"""
Dense complex matrix algebra on finite-dimensional Hilbert spaces.

Matrices are plain complex128 numpy arrays. This module provides the
commutator, Hermiticity/unitarity predicates, the system/environment
tensor factorization, and builders for Pauli strings, truncated bosonic
modes and computational-basis projectors.
"""

from dataclasses import dataclass
from functools import reduce
from typing import Iterable

import numpy as np

from config import HERMITIAN_TOL
from errors import DimensionMismatchError, FactorizationError

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


# ── Matrix basics ─────────────────────────────────────────────────────────────

def as_matrix(M) -> np.ndarray:
    """Coerce to a square complex128 array, rejecting anything else."""
    arr = np.asarray(M, dtype=complex)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
        raise DimensionMismatchError(f"expected a square matrix, got shape {arr.shape}")
    return arr


def frozen(M) -> np.ndarray:
    """Read-only copy of a matrix, safe to share between threads."""
    arr = np.array(as_matrix(M), copy=True)
    arr.flags.writeable = False
    return arr


def require_same_dim(*matrices: np.ndarray) -> int:
    dims = {m.shape[0] for m in matrices}
    if len(dims) != 1:
        raise DimensionMismatchError(f"operand dimensions differ: {sorted(dims)}")
    return dims.pop()


def frobenius(M) -> float:
    return float(np.linalg.norm(M))


def is_hermitian(M, tol: float = HERMITIAN_TOL) -> bool:
    M = as_matrix(M)
    return frobenius(M - M.conj().T) <= tol


def is_skew_hermitian(M, tol: float = HERMITIAN_TOL) -> bool:
    M = as_matrix(M)
    return frobenius(M + M.conj().T) <= tol


def is_unitary(M, tol: float = HERMITIAN_TOL) -> bool:
    M = as_matrix(M)
    return frobenius(M.conj().T @ M - np.eye(M.shape[0])) <= tol


def commutator(A, B) -> np.ndarray:
    """Return AB - BA."""
    A, B = as_matrix(A), as_matrix(B)
    require_same_dim(A, B)
    return A @ B - B @ A


def tensor(*ops) -> np.ndarray:
    """Kronecker product, leftmost factor most significant."""
    if not ops:
        raise DimensionMismatchError("tensor needs at least one factor")
    return reduce(np.kron, (as_matrix(op) for op in ops))


# ── System ⊗ environment ──────────────────────────────────────────────────────

@dataclass(frozen=True)
class HilbertFactorization:
    """Joint space H_s ⊗ H_e with the system factor most significant."""

    d_s: int
    d_e: int

    def __post_init__(self):
        if self.d_s < 1 or self.d_e < 1:
            raise FactorizationError(f"factor dimensions must be positive, got {self.d_s}, {self.d_e}")

    @property
    def dim(self) -> int:
        return self.d_s * self.d_e

    def embed_system(self, M) -> np.ndarray:
        M = as_matrix(M)
        if M.shape[0] != self.d_s:
            raise FactorizationError(f"system operator has dim {M.shape[0]}, expected {self.d_s}")
        return np.kron(M, np.eye(self.d_e))

    def embed_env(self, B) -> np.ndarray:
        B = as_matrix(B)
        if B.shape[0] != self.d_e:
            raise FactorizationError(f"environment operator has dim {B.shape[0]}, expected {self.d_e}")
        return np.kron(np.eye(self.d_s), B)

    def product(self, S, B) -> np.ndarray:
        """S ⊗ B with both factors dimension-checked."""
        S, B = as_matrix(S), as_matrix(B)
        if S.shape[0] != self.d_s or B.shape[0] != self.d_e:
            raise FactorizationError(
                f"factor pair has dims ({S.shape[0]}, {B.shape[0]}), expected ({self.d_s}, {self.d_e})"
            )
        return np.kron(S, B)

    def lift(self, M) -> np.ndarray:
        """Embed a system operator; joint operators pass through unchanged."""
        M = as_matrix(M)
        if M.shape[0] == self.dim:
            return M
        return self.embed_system(M)

    def env_populations(self, psi) -> np.ndarray:
        """Reduced occupation of each environment level."""
        amp = np.asarray(psi).reshape(self.d_s, self.d_e)
        return np.sum(np.abs(amp) ** 2, axis=0)


# ── Builders ──────────────────────────────────────────────────────────────────

def identity(d: int) -> np.ndarray:
    if d < 1:
        raise DimensionMismatchError(f"dimension must be positive, got {d}")
    return np.eye(d, dtype=complex)


def pauli_string(word: str) -> np.ndarray:
    """Tensor product of Pauli matrices, e.g. "ZZI"."""
    if not word:
        raise ValueError("Pauli word must not be empty")
    try:
        return tensor(*(PAULI[letter] for letter in word.upper()))
    except KeyError as exc:
        raise ValueError(f"Pauli word {word!r} contains a letter outside I, X, Y, Z") from exc


def site_operator(op, site: int, n_sites: int) -> np.ndarray:
    """Place a 2x2 operator on one qubit of an n-qubit register (site 1 is leftmost)."""
    if not 1 <= site <= n_sites:
        raise ValueError(f"site {site} outside 1..{n_sites}")
    factors = [PAULI["I"]] * n_sites
    factors[site - 1] = as_matrix(op)
    return tensor(*factors)


def collective(op, n_sites: int) -> np.ndarray:
    """Σ_j op^(j) over an n-qubit register."""
    return sum(site_operator(op, j, n_sites) for j in range(1, n_sites + 1))


def boson_annihilate(d: int) -> np.ndarray:
    """Truncated ladder operator with <n-1|a|n> = sqrt(n)."""
    if d < 2:
        raise ValueError(f"bosonic truncation needs at least 2 levels, got {d}")
    return np.diag(np.sqrt(np.arange(1, d)), k=1).astype(complex)


def number_operator(d: int) -> np.ndarray:
    return np.diag(np.arange(d)).astype(complex)


def interior_projector(d: int) -> np.ndarray:
    """Projector onto Fock levels 0..d-2, where [a, a†] = 1 holds."""
    P = np.eye(d, dtype=complex)
    P[-1, -1] = 0.0
    return P


def hamming_weight(index: int) -> int:
    return bin(index).count("1")


def basis_index(bits: str) -> int:
    if not bits or any(c not in "01" for c in bits):
        raise ValueError(f"expected a binary word, got {bits!r}")
    return int(bits, 2)


def ket(bits: str) -> np.ndarray:
    """Computational basis vector |bits>."""
    vec = np.zeros(2 ** len(bits), dtype=complex)
    vec[basis_index(bits)] = 1.0
    return vec


def fock(d: int, n: int) -> np.ndarray:
    if not 0 <= n < d:
        raise ValueError(f"Fock level {n} outside 0..{d - 1}")
    vec = np.zeros(d, dtype=complex)
    vec[n] = 1.0
    return vec


def ket_bra(i: str, j: str) -> np.ndarray:
    """|i><j| for binary words of equal length."""
    if len(i) != len(j):
        raise DimensionMismatchError(f"words {i!r} and {j!r} differ in length")
    return np.outer(ket(i), ket(j).conj())


def coherence_label(i: int, j: int, n_bits: int) -> str:
    return f"|{i:0{n_bits}b}><{j:0{n_bits}b}|"


def normalized(vec: Iterable) -> np.ndarray:
    vec = np.asarray(vec, dtype=complex).ravel()
    norm = np.linalg.norm(vec)
    if norm == 0:
        raise ValueError("cannot normalize the zero vector")
    return vec / norm
