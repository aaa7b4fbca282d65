"""
Seeded model fixtures.

Provides the worked examples used throughout the tests and shipped
scenarios:
- A monitored harmonic oscillator coupled to one bath mode
- Collective σ₃ dephasing of N qubits coupled to one bath mode
- Random two-qubit instances for the inverse-solver cross-checks

All randomness is seeded for reproducibility.
"""

from itertools import product
from math import comb
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np
from scipy.special import factorial

from config import SEED
from dynamics.model import SystemModel
from operators.algebra import (
    PAULI,
    HilbertFactorization,
    boson_annihilate,
    collective,
    fock,
    hamming_weight,
    ket,
    ket_bra,
    number_operator,
    site_operator,
)
from operators.harmonic import HarmonicOperator

OMEGA = 1.0
OMEGA0 = 1.0
BATH_FREQUENCY = 1.0
COUPLING = 0.5
KAPPA = 1.0

OSCILLATOR_LEVELS = 10
BATH_LEVELS = 4

DFS_COHERENCE = ("01", "10")
UNEQUAL_COHERENCE = ("00", "11")
N3_OBSERVABLE_TERMS = [("000", "000"), ("001", "001"), ("010", "100"), ("011", "101")]


def rng(seed: int = SEED) -> np.random.Generator:
    return np.random.default_rng(seed)


# ── Oscillator ────────────────────────────────────────────────────────────────

def rotating_quadrature(d: int, omega: float = OMEGA) -> HarmonicOperator:
    """C(t) = a·e^{iωt} + a†·e^{−iωt} on d Fock levels."""
    a = boson_annihilate(d)
    return HarmonicOperator([(1, a), (-1, a.conj().T)], base_frequency=omega, dim=d)


def displacement_generator(d: int) -> np.ndarray:
    """a† − a (anti-Hermitian; the Hermitian control is i(a† − a))."""
    a = boson_annihilate(d)
    return a.conj().T - a


def oscillator_model(d: int = OSCILLATOR_LEVELS, d_e: int = BATH_LEVELS,
                     omega: float = OMEGA, kappa: float = KAPPA) -> SystemModel:
    """Oscillator monitored through its rotating quadrature, exchange-coupled to one bath mode."""
    a = boson_annihilate(d)
    c = boson_annihilate(d_e)
    return SystemModel(
        factorization=HilbertFactorization(d, d_e),
        H0_sys=omega * number_operator(d),
        H_env=omega * number_operator(d_e),
        observable=rotating_quadrature(d, omega),
        controls=(1j * displacement_generator(d),),
        interaction_factors=((a, kappa * c.conj().T), (a.conj().T, kappa * c)),
        name="oscillator",
    )


def oscillator_initial_state(d: int = OSCILLATOR_LEVELS, d_e: int = BATH_LEVELS,
                             alpha: float = 0.5) -> np.ndarray:
    """Truncated coherent state ⊗ bath vacuum."""
    n = np.arange(d)
    amp = alpha ** n / np.sqrt(factorial(n))
    amp = amp / np.linalg.norm(amp)
    return np.kron(amp, fock(d_e, 0))


# ── Dephasing register ────────────────────────────────────────────────────────

def dephasing_operator(n: int) -> np.ndarray:
    """S = Σⱼ σ₃⁽ʲ⁾."""
    return collective(PAULI["Z"], n)


def coherence(i: str, j: str, hermitian: bool = False) -> np.ndarray:
    M = ket_bra(i, j)
    return M + M.conj().T if hermitian else M


def n3_observable() -> np.ndarray:
    return sum(ket_bra(i, j) for i, j in N3_OBSERVABLE_TERMS)


def flip_controls(n: int) -> Tuple[np.ndarray, ...]:
    """σ₁ on each site."""
    return tuple(site_operator(PAULI["X"], j, n) for j in range(1, n + 1))


def dephasing_model(n: int = 2, observable: Optional[np.ndarray] = None, d_e: int = BATH_LEVELS,
                    coupling: float = COUPLING, omega0: float = OMEGA0,
                    with_controls: bool = False, name: str = "dephasing") -> SystemModel:
    """Collective dephasing H_SB = g·S ⊗ (b + b†) with H0 = (ω₀/2)·S."""
    S = dephasing_operator(n)
    b = boson_annihilate(d_e)
    if observable is None:
        observable = coherence(*DFS_COHERENCE, hermitian=True)
    return SystemModel(
        factorization=HilbertFactorization(2 ** n, d_e),
        H0_sys=omega0 / 2 * S,
        H_env=BATH_FREQUENCY * number_operator(d_e),
        observable=HarmonicOperator.constant(observable),
        controls=flip_controls(n) if with_controls else (),
        interaction_factors=((S, coupling * (b + b.conj().T)),),
        name=name,
    )


def feedback_model(coupling: float = COUPLING, omega: float = BATH_FREQUENCY) -> SystemModel:
    """Qubit ⊗ two-level bath read out through |0⟩⟨0| ⊗ σ₁ with H_SB = g·σ₃ ⊗ σ₃.

    The output couples to the bath in open loop, but its joint distribution
    span{|0⟩⟨0|⊗σ₁, |0⟩⟨0|⊗σ₂} is closed under commutation with H_SB.
    """
    Z = PAULI["Z"]
    P0 = ket_bra("0", "0")
    return SystemModel(
        factorization=HilbertFactorization(2, 2),
        H0_sys=OMEGA0 / 2 * Z,
        H_env=omega * Z,
        observable=HarmonicOperator.constant(np.kron(P0, PAULI["X"])),
        interaction_factors=((Z, coupling * Z),),
        name="feedback",
    )


def bell_like_state(i: str, j: str, d_e: int = BATH_LEVELS) -> np.ndarray:
    """(|i⟩ + |j⟩)/√2 ⊗ bath vacuum."""
    return np.kron((ket(i) + ket(j)) / np.sqrt(2), fock(d_e, 0))


def equal_weight_dimension(n: int) -> int:
    return sum(comb(n, w) ** 2 for w in range(n + 1))


def equal_weight_pairs(n: int) -> List[Tuple[int, int]]:
    """(i, j) index pairs of |i⟩⟨j| with w(i) = w(j)."""
    return [
        (i, j) for i, j in product(range(2 ** n), repeat=2)
        if hamming_weight(i) == hamming_weight(j)
    ]


# ── Random instances ──────────────────────────────────────────────────────────

def random_hermitian(d: int, gen: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    A = gen.normal(size=(d, d)) + 1j * gen.normal(size=(d, d))
    return scale * (A + A.conj().T) / 2


def random_matrix(d: int, gen: np.random.Generator) -> np.ndarray:
    return gen.normal(size=(d, d)) + 1j * gen.normal(size=(d, d))


def random_harmonic(d: int, gen: np.random.Generator, n_terms: int = 3) -> HarmonicOperator:
    """Random harmonic operator with small integer frequencies."""
    keys = gen.choice(np.arange(-3, 4), size=n_terms, replace=False)
    return HarmonicOperator([(int(k), random_matrix(d, gen)) for k in keys], dim=d)


class InverseInstance(NamedTuple):
    H0: np.ndarray
    controls: Tuple[np.ndarray, ...]
    factors: Tuple[np.ndarray, ...]


def _block_hermitian(gen: np.random.Generator, blocks: List[List[int]], d: int) -> np.ndarray:
    H = np.zeros((d, d), dtype=complex)
    for block in blocks:
        idx = np.ix_(block, block)
        H[idx] = random_hermitian(len(block), gen)
    return H


def random_two_qubit_instance(gen: np.random.Generator, n_controls: int = 1,
                              leaky: bool = True) -> InverseInstance:
    """Two-qubit drift and controls sharing the eigenspaces of a degenerate interaction factor.

    S has the spectrum pattern (s₀, s₁, s₁, s₂) in a random basis, so the
    invariant space is generically nontrivial. With `leaky` one more control
    couples the two nondegenerate eigenvectors and shrinks the space.
    """
    d = 4
    blocks = [[0], [1, 2], [3]]
    s = gen.normal(size=3)
    S_diag = np.diag([s[0], s[1], s[1], s[2]]).astype(complex)
    Q, _ = np.linalg.qr(random_matrix(d, gen))
    rotate = lambda M: Q @ M @ Q.conj().T
    H0 = rotate(_block_hermitian(gen, blocks, d))
    controls = [rotate(_block_hermitian(gen, blocks, d)) for _ in range(n_controls)]
    if leaky:
        X = np.zeros((d, d), dtype=complex)
        X[0, 3] = gen.normal() + 1j * gen.normal()
        X[3, 0] = np.conj(X[0, 3])
        controls.append(rotate(X))
    return InverseInstance(H0, tuple(controls), (rotate(S_diag),))


def fixture_models() -> Dict[str, Tuple[SystemModel, bool]]:
    """Small fixture models with their expected open-loop verdicts."""
    return {
        "dephasing_dfs": (dephasing_model(2, name="dephasing_dfs"), True),
        "dephasing_unequal": (
            dephasing_model(2, coherence(*UNEQUAL_COHERENCE, hermitian=True), name="dephasing_unequal"),
            False,
        ),
        "dephasing_controls": (dephasing_model(2, d_e=3, with_controls=True, name="dephasing_controls"), False),
        "oscillator": (oscillator_model(d=5, d_e=3), False),
    }
