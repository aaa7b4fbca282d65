"""
Harmonic operators: finite sums Σₖ e^{iμₖt}·Mₖ of frequency-tagged matrices.

The family is closed under addition, commutation and the derivation
ad_{H0} + ∂/∂t, which is all the distribution construction needs.
Frequencies are kept as exact fractions of a base frequency so that deep
commutator closures never drift between frequency buckets.
"""

from fractions import Fraction
from numbers import Number
from typing import Callable, Iterable, Optional, Tuple

import numpy as np

from config import DROP_TOL, FREQ_TOL
from errors import DimensionMismatchError
from operators.algebra import as_matrix, commutator, frobenius, frozen


def _as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    return Fraction(float(value))


class HarmonicOperator:
    """Immutable Σₖ e^{iμₖt}Mₖ in canonical form.

    Terms whose frequencies differ by at most `freq_tol` are merged by matrix
    addition and terms with Frobenius norm at most `drop_tol` are removed.
    Term frequencies are `multiple * base_frequency`.
    """

    __slots__ = ("_keys", "_matrices", "base_frequency", "freq_tol", "dim")

    def __init__(self, terms: Iterable[Tuple[object, np.ndarray]] = (), *,
                 base_frequency: float = 1.0, freq_tol: float = FREQ_TOL,
                 drop_tol: float = DROP_TOL, dim: Optional[int] = None):
        self.base_frequency = float(base_frequency)
        self.freq_tol = float(freq_tol)

        raw = [(_as_fraction(k), as_matrix(m)) for k, m in terms]
        dims = {m.shape[0] for _, m in raw}
        if dim is not None:
            dims.add(int(dim))
        if len(dims) != 1:
            raise DimensionMismatchError(
                f"harmonic terms must share one dimension, got {sorted(dims) or 'none'}"
            )
        self.dim = dims.pop()

        raw.sort(key=lambda km: km[0])
        keys, matrices = [], []
        for key, mat in raw:
            if keys and abs(float((key - keys[-1]) * self.base_frequency)) <= self.freq_tol:
                matrices[-1] = matrices[-1] + mat
            else:
                keys.append(key)
                matrices.append(mat)

        kept = [(k, m) for k, m in zip(keys, matrices) if frobenius(m) > drop_tol]
        self._keys = tuple(k for k, _ in kept)
        self._matrices = tuple(frozen(m) for _, m in kept)

    # ── Constructors ──

    @classmethod
    def constant(cls, M, **kwargs) -> "HarmonicOperator":
        M = as_matrix(M)
        kwargs.setdefault("dim", M.shape[0])
        return cls([(0, M)], **kwargs)

    @classmethod
    def zero(cls, dim: int, **kwargs) -> "HarmonicOperator":
        return cls([], dim=dim, **kwargs)

    @classmethod
    def rotating(cls, frequency: float, M, **kwargs) -> "HarmonicOperator":
        """Single term e^{i·frequency·t}·M."""
        M = as_matrix(M)
        if frequency == 0:
            return cls.constant(M, **kwargs)
        kwargs.setdefault("dim", M.shape[0])
        return cls([(1, M)], base_frequency=frequency, **kwargs)

    def _like(self, terms, base_frequency=None, dim=None) -> "HarmonicOperator":
        return HarmonicOperator(
            terms,
            base_frequency=self.base_frequency if base_frequency is None else base_frequency,
            freq_tol=self.freq_tol,
            dim=self.dim if dim is None else dim,
        )

    # ── Views ──

    @property
    def keys(self) -> Tuple[Fraction, ...]:
        return self._keys

    @property
    def frequencies(self) -> Tuple[float, ...]:
        return tuple(float(k * self.base_frequency) for k in self._keys)

    @property
    def matrices(self) -> Tuple[np.ndarray, ...]:
        return self._matrices

    @property
    def terms(self) -> Tuple[Tuple[float, np.ndarray], ...]:
        return tuple(zip(self.frequencies, self._matrices))

    def __len__(self) -> int:
        return len(self._keys)

    @property
    def is_constant(self) -> bool:
        return all(k == 0 for k in self._keys)

    def component(self, frequency: float) -> np.ndarray:
        """Matrix attached to `frequency` (zero if absent)."""
        for mu, mat in self.terms:
            if abs(mu - frequency) <= self.freq_tol:
                return mat
        return np.zeros((self.dim, self.dim), dtype=complex)

    def evaluate(self, t: float) -> np.ndarray:
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for mu, mat in self.terms:
            out += np.exp(1j * mu * t) * mat
        return out

    __call__ = evaluate

    def norm(self) -> float:
        """Norm induced by `inner`."""
        return float(np.sqrt(sum(frobenius(m) ** 2 for m in self._matrices)))

    def inner(self, other: "HarmonicOperator") -> complex:
        """Σ over matched frequencies of trace(Mₖ† Nₖ)."""
        total = 0j
        for mu, mat in self.terms:
            total += np.vdot(mat, other.component(mu))
        return complex(total)

    def is_zero(self, tol: float = DROP_TOL) -> bool:
        return self.norm() <= tol

    # ── Algebra ──

    def rebased(self, base_frequency: float = 1.0) -> "HarmonicOperator":
        if base_frequency == self.base_frequency:
            return self
        terms = [(Fraction(mu / base_frequency), m) for mu, m in self.terms]
        return self._like(terms, base_frequency=base_frequency)

    def aligned(self, other: "HarmonicOperator"):
        """Both operands expressed over one common base frequency."""
        if self.dim != other.dim:
            raise DimensionMismatchError(f"harmonic operands have dims {self.dim} and {other.dim}")
        if self.base_frequency == other.base_frequency:
            return self, other
        return self.rebased(1.0), other.rebased(1.0)

    def __add__(self, other):
        other = as_harmonic(other, self.dim)
        a, b = self.aligned(other)
        terms = list(zip(a.keys, a.matrices)) + list(zip(b.keys, b.matrices))
        return a._like(terms)

    __radd__ = __add__

    def __neg__(self):
        return self._like([(k, -m) for k, m in zip(self._keys, self._matrices)])

    def __sub__(self, other):
        return self + (-as_harmonic(other, self.dim))

    def __rsub__(self, other):
        return as_harmonic(other, self.dim) - self

    def __mul__(self, scalar):
        if not isinstance(scalar, Number):
            return NotImplemented
        return self._like([(k, scalar * m) for k, m in zip(self._keys, self._matrices)])

    __rmul__ = __mul__

    def dag(self) -> "HarmonicOperator":
        """Adjoint at every t: e^{-iμt}·M†."""
        return self._like([(-k, m.conj().T) for k, m in zip(self._keys, self._matrices)])

    def time_derivative(self) -> "HarmonicOperator":
        return self._like([(k, 1j * mu * m) for k, (mu, m) in zip(self._keys, self.terms)])

    def map_matrices(self, fn: Callable[[np.ndarray], np.ndarray]) -> "HarmonicOperator":
        """Apply a linear map to every term (embeddings, compressions)."""
        mapped = [(k, as_matrix(fn(m))) for k, m in zip(self._keys, self._matrices)]
        if not mapped:
            sample = as_matrix(fn(np.zeros((self.dim, self.dim), dtype=complex)))
            return self._like([], dim=sample.shape[0])
        return self._like(mapped, dim=mapped[0][1].shape[0])

    def compress(self, P) -> "HarmonicOperator":
        P = as_matrix(P)
        return self.map_matrices(lambda m: P @ m @ P)

    def is_hermitian(self, tol: float) -> bool:
        return (self - self.dag()).norm() <= tol

    def __repr__(self) -> str:
        freqs = ", ".join(f"{mu:.4g}" for mu in self.frequencies)
        return f"HarmonicOperator(dim={self.dim}, frequencies=[{freqs}])"


def as_harmonic(value, dim: Optional[int] = None) -> HarmonicOperator:
    """Promote a matrix (or a scalar times identity) to a constant harmonic operator."""
    if isinstance(value, HarmonicOperator):
        return value
    if isinstance(value, Number):
        if dim is None:
            raise DimensionMismatchError("cannot promote a scalar without a dimension")
        return HarmonicOperator.constant(value * np.eye(dim))
    return HarmonicOperator.constant(value)


def harmonic_commutator(A, B) -> HarmonicOperator:
    """[A, B] termwise: (μ+ν, [M, N]) for every pair, canonicalized."""
    A, B = as_harmonic(A), as_harmonic(B)
    a, b = A.aligned(B)
    terms = [
        (ka + kb, commutator(ma, mb))
        for ka, ma in zip(a.keys, a.matrices)
        for kb, mb in zip(b.keys, b.matrices)
    ]
    return HarmonicOperator(terms, base_frequency=a.base_frequency,
                            freq_tol=min(a.freq_tol, b.freq_tol), dim=a.dim)


def harmonic_derivation(A, H0) -> HarmonicOperator:
    """(ad_{H0} + ∂/∂t) A with the dynamic generator −iH0.

    H0 is the (time-independent, Hermitian) Hamiltonian. Each term maps to
    [Mₖ, −iH0] + iμₖMₖ, so an operator rotating with the free evolution,
    such as a·e^{iωt} under H0 = ω·a†a, is annihilated.
    """
    A = as_harmonic(A)
    H0 = as_matrix(H0)
    if H0.shape[0] != A.dim:
        raise DimensionMismatchError(f"drift has dim {H0.shape[0]}, operator has dim {A.dim}")
    G = -1j * H0
    terms = [
        (k, commutator(m, G) + 1j * mu * m)
        for k, (mu, m) in zip(A.keys, A.terms)
    ]
    return A._like(terms)
