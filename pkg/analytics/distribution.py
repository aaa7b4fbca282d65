"""
Operator distribution of an output observable.

The distribution is the span of every iterated image of the observable C(t)
under the control commutators ad_{H_i} and the drift derivation
ad_{H0} + ∂/∂t. Stages alternate: first the control images are closed
(C̃ₙ), then the derivation images (𝒞ₙ), until a whole stage adds no rank.

Spans are kept numerically orthonormal in the inner product
⟨A, B⟩ = Σ over matched frequencies of trace(Mₖ† Nₖ).
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import FREQ_TOL, RANK_TOL, thread_pool
from errors import DimensionMismatchError
from operators.algebra import HilbertFactorization, as_matrix
from operators.harmonic import (
    HarmonicOperator,
    as_harmonic,
    harmonic_commutator,
    harmonic_derivation,
)

logger = logging.getLogger(__name__)


# ── Frequency-bucketed vectorization ──────────────────────────────────────────

def _merge_frequencies(ops: Sequence[HarmonicOperator], freq_tol: float) -> List[float]:
    freqs: List[float] = []
    for mu in sorted(mu for op in ops for mu in op.frequencies):
        if not freqs or abs(mu - freqs[-1]) > freq_tol:
            freqs.append(mu)
    return freqs


def _vectorize(op: HarmonicOperator, freqs: Sequence[float], freq_tol: float) -> Tuple[np.ndarray, float]:
    """Stack the components of `op` bucket by bucket.

    Returns the vector and the squared norm of any component whose frequency
    has no bucket (that part can never be spanned).
    """
    block = op.dim * op.dim
    vec = np.zeros(len(freqs) * block, dtype=complex)
    outside = 0.0
    for mu, mat in op.terms:
        idx = _bucket(freqs, mu, freq_tol)
        if idx is None:
            outside += float(np.linalg.norm(mat)) ** 2
        else:
            vec[idx * block:(idx + 1) * block] = mat.ravel()
    return vec, outside


def _bucket(freqs: Sequence[float], mu: float, freq_tol: float) -> Optional[int]:
    for idx, nu in enumerate(freqs):
        if abs(mu - nu) <= freq_tol:
            return idx
    return None


def _devectorize(vec: np.ndarray, freqs: Sequence[float], dim: int, freq_tol: float) -> HarmonicOperator:
    block = dim * dim
    terms = [(mu, vec[i * block:(i + 1) * block].reshape(dim, dim)) for i, mu in enumerate(freqs)]
    return HarmonicOperator(terms, freq_tol=freq_tol, dim=dim)


# ── Operator spaces ───────────────────────────────────────────────────────────

class OperatorSpace:
    """Orthonormal span of harmonic operators.

    `frame` holds the basis as orthonormal columns of the bucketed
    vectorization over `frequencies`.
    """

    def __init__(self, dim: int, frequencies: Sequence[float], frame: np.ndarray,
                 rank_tol: float = RANK_TOL, freq_tol: float = FREQ_TOL):
        self.dim = int(dim)
        self.frequencies = tuple(float(mu) for mu in frequencies)
        rows = len(self.frequencies) * self.dim ** 2
        frame = np.array(frame, dtype=complex, copy=True)
        frame = frame.reshape(rows, frame.size // rows if rows else 0)
        frame.flags.writeable = False
        self.frame = frame
        self.rank_tol = rank_tol
        self.freq_tol = freq_tol
        self._basis: Optional[Tuple[HarmonicOperator, ...]] = None

    @classmethod
    def empty(cls, dim: int, rank_tol: float = RANK_TOL, freq_tol: float = FREQ_TOL) -> "OperatorSpace":
        return cls(dim, [], np.zeros((0, 0), dtype=complex), rank_tol, freq_tol)

    @classmethod
    def from_matrices(cls, dim: int, columns: np.ndarray, rank_tol: float = RANK_TOL,
                      freq_tol: float = FREQ_TOL) -> "OperatorSpace":
        """Constant space from orthonormal vectorized matrices (one per column)."""
        columns = np.asarray(columns, dtype=complex)
        if columns.size == 0:
            return cls.empty(dim, rank_tol, freq_tol)
        return cls(dim, [0.0], columns, rank_tol, freq_tol)

    def __len__(self) -> int:
        return self.frame.shape[1]

    @property
    def dimension(self) -> int:
        return len(self)

    @property
    def basis(self) -> Tuple[HarmonicOperator, ...]:
        if self._basis is None:
            self._basis = tuple(
                _devectorize(self.frame[:, j], self.frequencies, self.dim, self.freq_tol)
                for j in range(len(self))
            )
        return self._basis

    def buckets(self) -> Dict[float, int]:
        """Number of basis elements with support at each frequency."""
        block = self.dim ** 2
        counts = {}
        for i, mu in enumerate(self.frequencies):
            rows = self.frame[i * block:(i + 1) * block, :]
            counts[mu] = int(np.sum(np.linalg.norm(rows, axis=0) > self.rank_tol))
        return counts

    def gram(self) -> np.ndarray:
        return self.frame.conj().T @ self.frame

    def _check(self, op: HarmonicOperator):
        if op.dim != self.dim:
            raise DimensionMismatchError(f"operator has dim {op.dim}, space has dim {self.dim}")

    def coordinates(self, op) -> np.ndarray:
        op = as_harmonic(op)
        self._check(op)
        vec, _ = _vectorize(op, self.frequencies, self.freq_tol)
        return self.frame.conj().T @ vec if len(self) else np.zeros(0, dtype=complex)

    def project(self, op) -> HarmonicOperator:
        coords = self.coordinates(op)
        if not len(self):
            return HarmonicOperator.zero(self.dim)
        return _devectorize(self.frame @ coords, self.frequencies, self.dim, self.freq_tol)

    def residual_norm(self, op) -> float:
        """Norm of the part of `op` outside the span."""
        op = as_harmonic(op)
        self._check(op)
        vec, outside = _vectorize(op, self.frequencies, self.freq_tol)
        if len(self):
            vec = vec - self.frame @ (self.frame.conj().T @ vec)
        return float(np.sqrt(np.linalg.norm(vec) ** 2 + outside))

    def contains(self, op, tol: Optional[float] = None) -> bool:
        """Residual after projection is at most tol·‖op‖ (tol defaults to rank_tol)."""
        op = as_harmonic(op)
        tol = self.rank_tol if tol is None else tol
        return self.residual_norm(op) <= tol * op.norm()

    def embedded(self, factorization: HilbertFactorization) -> "OperatorSpace":
        """The same span with every element lifted to M ⊗ I_e."""
        if self.dim == factorization.dim:
            return self
        lifted = [op.map_matrices(factorization.embed_system) for op in self.basis]
        if not lifted:
            return OperatorSpace.empty(factorization.dim, self.rank_tol, self.freq_tol)
        return orthonormalize(lifted, self.rank_tol, self.freq_tol)

    def __repr__(self) -> str:
        return f"OperatorSpace(dim={self.dim}, rank={len(self)}, frequencies={list(self.frequencies)})"


def _gram_schmidt_step(Q: np.ndarray, v: np.ndarray, rank_tol: float) -> Optional[np.ndarray]:
    """Modified Gram-Schmidt with one re-orthogonalization pass."""
    n0 = np.linalg.norm(v)
    if n0 == 0:
        return None
    w = v.copy()
    for _ in range(2):
        for j in range(Q.shape[1]):
            q = Q[:, j]
            w -= np.vdot(q, w) * q
    nw = np.linalg.norm(w)
    if nw <= rank_tol * n0:
        return None
    return w / nw


def orthonormalize(ops: Sequence, rank_tol: float = RANK_TOL, freq_tol: float = FREQ_TOL,
                   dim: Optional[int] = None) -> OperatorSpace:
    """Orthonormal basis of span(ops); near-dependent inputs are discarded.

    An empty input yields an empty space of dimension `dim` (1 if not given).
    """
    ops = [as_harmonic(op) for op in ops]
    if not ops:
        return OperatorSpace.empty(dim or 1, rank_tol, freq_tol)
    dims = {op.dim for op in ops}
    if len(dims) != 1:
        raise DimensionMismatchError(f"operators have differing dims {sorted(dims)}")
    dim = dims.pop()
    freqs = _merge_frequencies(ops, freq_tol)
    Q = np.zeros((len(freqs) * dim * dim, 0), dtype=complex)
    for op in ops:
        vec, _ = _vectorize(op, freqs, freq_tol)
        q = _gram_schmidt_step(Q, vec, rank_tol)
        if q is not None:
            Q = np.column_stack([Q, q])
    return OperatorSpace(dim, freqs, Q, rank_tol, freq_tol)


class _SpanBuilder:
    """Incremental orthonormal span whose frequency buckets grow on demand."""

    def __init__(self, dim: int, rank_tol: float, freq_tol: float):
        self.dim = dim
        self.rank_tol = rank_tol
        self.freq_tol = freq_tol
        self.freqs: List[float] = []
        self.Q = np.zeros((0, 0), dtype=complex)

    def __len__(self) -> int:
        return self.Q.shape[1]

    def bucket_count(self) -> int:
        return max(1, len(self._live_buckets()))

    def _live_buckets(self) -> List[int]:
        block = self.dim ** 2
        return [
            i for i in range(len(self.freqs))
            if len(self) and np.linalg.norm(self.Q[i * block:(i + 1) * block, :]) > 0
        ]

    def add(self, op: HarmonicOperator) -> bool:
        for mu in op.frequencies:
            if _bucket(self.freqs, mu, self.freq_tol) is None:
                self.freqs.append(mu)
                pad = np.zeros((self.dim ** 2, self.Q.shape[1]), dtype=complex)
                self.Q = np.vstack([self.Q, pad])
        vec, _ = _vectorize(op, self.freqs, self.freq_tol)
        q = _gram_schmidt_step(self.Q, vec, self.rank_tol)
        if q is None:
            return False
        self.Q = np.column_stack([self.Q, q])
        return True

    def space(self) -> OperatorSpace:
        block = self.dim ** 2
        live = self._live_buckets()
        if not live:
            return OperatorSpace.empty(self.dim, self.rank_tol, self.freq_tol)
        rows = np.concatenate([np.arange(i * block, (i + 1) * block) for i in live])
        freqs = [self.freqs[i] for i in live]
        order = np.argsort(freqs, kind="stable")
        rows = np.concatenate([rows[k * block:(k + 1) * block] for k in order])
        return OperatorSpace(self.dim, [freqs[k] for k in order], self.Q[rows, :],
                             self.rank_tol, self.freq_tol)


# ── Closure ───────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ClosureCaps:
    """Termination caps; None selects the dimension-based default."""

    max_ad_depth: Optional[int] = None
    max_stage: Optional[int] = None
    max_dim: Optional[int] = None

    def resolved(self, dim: int) -> "ClosureCaps":
        return ClosureCaps(
            max_ad_depth=self.max_ad_depth or 2 * dim * dim,
            max_stage=self.max_stage or 2 * dim * dim,
            max_dim=self.max_dim,
        )


@dataclass(frozen=True)
class ClosureReport:
    converged: bool
    iterations: int
    final_dimension: int
    per_stage_dims: Tuple[int, ...]
    cap_hit: Optional[str] = None
    note: Optional[str] = None
    frequencies: Tuple[float, ...] = field(default_factory=tuple)


def _as_caps(caps) -> ClosureCaps:
    if caps is None:
        return ClosureCaps()
    if isinstance(caps, ClosureCaps):
        return caps
    return ClosureCaps(**dict(caps))


def _close_under(builder: _SpanBuilder, seeds: List[HarmonicOperator],
                 maps: Sequence[Callable[[HarmonicOperator], HarmonicOperator]],
                 compress: Callable[[HarmonicOperator], HarmonicOperator],
                 max_depth: int, dim_cap: Callable[[], int], threads: int) -> Optional[str]:
    """Add images of the seeds under `maps` until no rank growth; return the cap hit, if any."""
    frontier = list(seeds)
    with thread_pool(threads) as pool:
        for _ in range(max_depth):
            tasks = [(m, T) for T in frontier for m in maps]
            images = list(pool.map(lambda task: task[0](task[1]), tasks))
            grown = []
            for image in images:
                if len(builder) >= dim_cap():
                    return "max_dim"
                if builder.add(compress(image)):
                    seeds.append(image)
                    grown.append(image)
            if not grown:
                return None
            frontier = grown
    return "max_ad_depth"


def generate_distribution(C, H0, controls: Sequence = (), caps=None, *,
                          projector=None, extra_seeds: Sequence = (),
                          rank_tol: float = RANK_TOL, freq_tol: float = FREQ_TOL,
                          threads: int = 1) -> Tuple[OperatorSpace, ClosureReport]:
    """Span of the alternating control/derivation closure of C.

    Args:
        C: observable, harmonic or constant.
        H0: time-independent Hermitian drift.
        controls: time-independent control Hamiltonians.
        caps: `ClosureCaps` or mapping with max_ad_depth, max_stage, max_dim.
        projector: optional P; rank and containment are judged on P·M·P while
            images are always taken of the uncompressed operators.
        extra_seeds: operators added to the initial span next to C.

    Returns:
        The orthonormalized space and a `ClosureReport`.
    """
    C = as_harmonic(C)
    C = HarmonicOperator(zip(C.keys, C.matrices), base_frequency=C.base_frequency,
                         freq_tol=freq_tol, dim=C.dim)
    d = C.dim
    H0 = as_matrix(H0)
    controls = [as_matrix(H) for H in controls]
    for H in [H0, *controls]:
        if H.shape[0] != d:
            raise DimensionMismatchError(f"generator has dim {H.shape[0]}, observable has dim {d}")
    caps = _as_caps(caps).resolved(d)
    P = None if projector is None else as_matrix(projector)
    compress = (lambda op: op) if P is None else (lambda op: op.compress(P))

    builder = _SpanBuilder(d, rank_tol, freq_tol)
    seeds: List[HarmonicOperator] = []
    for op in [C, *map(as_harmonic, extra_seeds)]:
        if builder.add(compress(op)):
            seeds.append(op)

    if not len(builder):
        logger.info("zero observable: empty distribution")
        return builder.space(), ClosureReport(True, 0, 0, (), None, "zero observable")

    def dim_cap() -> int:
        return caps.max_dim if caps.max_dim else d * d * builder.bucket_count()

    control_maps = [
        (lambda T, G=HarmonicOperator.constant(H): harmonic_commutator(T, G)) for H in controls
    ]
    derivation = [lambda T: harmonic_derivation(T, H0)]

    per_stage: List[int] = []
    cap_hit = None
    converged = False
    stage = 0
    for stage in range(1, caps.max_stage + 1):
        start = len(builder)
        for maps in (control_maps, derivation):
            if maps:
                hit = _close_under(builder, seeds, maps, compress, caps.max_ad_depth, dim_cap, threads)
                cap_hit = hit or cap_hit
            per_stage.append(len(builder))
            if cap_hit == "max_dim":
                break
        logger.debug("stage %d: dims %s", stage, per_stage[-2:])
        if cap_hit == "max_dim":
            break
        if len(builder) == start:
            converged = True
            cap_hit = None
            break
    else:
        cap_hit = cap_hit or "max_stage"

    # Constant generators never create new frequencies, so the default cap is the full space.
    if cap_hit == "max_dim" and not caps.max_dim:
        converged, cap_hit = True, None

    space = builder.space()
    report = ClosureReport(
        converged=converged,
        iterations=stage,
        final_dimension=len(space),
        per_stage_dims=tuple(per_stage),
        cap_hit=cap_hit,
        frequencies=space.frequencies,
    )
    if converged:
        logger.info("distribution converged at dimension %d after %d stages", len(space), stage)
    else:
        logger.warning("distribution closure stopped by %s at dimension %d", cap_hit, len(space))
    return space, report
