"""
Decoupling checks for a measured output.

Open-loop decoupling holds when every element of the operator distribution
commutes with the interaction H_SB(t). Under output feedback the condition
relaxes to [T, H_SB] staying inside the distribution. Lie-derivative chains
of the output are available both in closed form (nested commutators) and
through a finite-difference oracle over composed propagator flows.
"""

import itertools
import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.linalg import expm

from config import (
    MAX_ORACLE_CHAIN,
    ORACLE_BASE_STEP,
    ORACLE_LEVELS,
    ORACLE_ORDER_SCALE,
    SEED,
    ZERO_TOL,
    thread_pool,
)
from errors import FactorizationError, InvalidChainError
from analytics.distribution import OperatorSpace
from operators.algebra import HilbertFactorization
from operators.harmonic import (
    HarmonicOperator,
    as_harmonic,
    harmonic_commutator,
    harmonic_derivation,
)

logger = logging.getLogger(__name__)

ChainEntry = Union[int, str, Mapping[int, float]]
INTERACTION = "I"


# ── Reports ───────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ViolationReport:
    """Evidence for a decoupling verdict.

    `witness` is (basis index, frequency, residual norm at that frequency)
    for the worst basis element, or None when the space is empty.
    """

    decoupled: bool
    worst_norm: float
    witness: Optional[Tuple[int, float, float]]
    per_element_norms: Tuple[float, ...]
    tol: float
    kind: str = "open-loop"


def _worst_component(op: HarmonicOperator) -> Tuple[float, float]:
    if not len(op):
        return 0.0, 0.0
    norms = [float(np.linalg.norm(m)) for m in op.matrices]
    k = int(np.argmax(norms))
    return op.frequencies[k], norms[k]


def _joint_space(space: OperatorSpace, factorization: HilbertFactorization) -> OperatorSpace:
    if space.dim == factorization.dim:
        return space
    if space.dim == factorization.d_s:
        return space.embedded(factorization)
    raise FactorizationError(
        f"space has dim {space.dim}, expected {factorization.d_s} or {factorization.dim}"
    )


def _joint_interaction(H_SB, factorization: HilbertFactorization) -> HarmonicOperator:
    H_SB = as_harmonic(H_SB)
    if H_SB.dim != factorization.dim:
        raise FactorizationError(f"H_SB has dim {H_SB.dim}, joint dim is {factorization.dim}")
    return H_SB


def _build_report(norms: List[float], witnesses: List[Tuple[float, float]],
                  decoupled: bool, tol: float, kind: str) -> ViolationReport:
    if not norms:
        return ViolationReport(True, 0.0, None, (), tol, kind)
    worst = int(np.argmax(norms))
    freq, comp = witnesses[worst]
    return ViolationReport(decoupled, float(norms[worst]), (worst, freq, comp), tuple(norms), tol, kind)


# ── Distribution-level conditions ─────────────────────────────────────────────

def check_open_loop(space: OperatorSpace, H_SB, factorization: HilbertFactorization,
                    tol: float = ZERO_TOL) -> ViolationReport:
    """Test [T, H_SB] = 0 for every basis element T of the distribution.

    System-space elements are embedded as T ⊗ I_e. The basis is orthonormal,
    so the absolute tolerance is scaled by max(1, ‖H_SB‖) only.
    """
    H_SB = _joint_interaction(H_SB, factorization)
    joint = _joint_space(space, factorization)
    threshold = tol * max(1.0, H_SB.norm())

    norms, witnesses = [], []
    for T in joint.basis:
        R = harmonic_commutator(T, H_SB)
        norms.append(R.norm())
        witnesses.append(_worst_component(R))
    decoupled = max(norms, default=0.0) <= threshold
    report = _build_report(norms, witnesses, decoupled, threshold, "open-loop")
    logger.info("open-loop check: decoupled=%s worst=%.3g", report.decoupled, report.worst_norm)
    return report


def check_feedback(space: OperatorSpace, H_SB, factorization: HilbertFactorization,
                   tol: Optional[float] = None) -> ViolationReport:
    """Test [T, H_SB] ∈ span for every basis element T, on the joint space.

    Per-element norms are projection residuals of the commutators. The
    tolerance is relative to max(1, ‖[T, H_SB]‖) and defaults to ten times
    the space's rank tolerance.
    """
    H_SB = _joint_interaction(H_SB, factorization)
    joint = _joint_space(space, factorization)
    tol = 10 * joint.rank_tol if tol is None else tol

    norms, witnesses, ok = [], [], True
    for T in joint.basis:
        R = harmonic_commutator(T, H_SB)
        outside = R - joint.project(R) if len(joint) else R
        residual = joint.residual_norm(R)
        norms.append(residual)
        witnesses.append(_worst_component(outside))
        ok = ok and residual <= tol * max(1.0, R.norm())
    report = _build_report(norms, witnesses, ok, tol, "feedback")
    logger.info("feedback check: decoupled=%s worst residual=%.3g", report.decoupled, report.worst_norm)
    return report


# ── Lie-derivative chains ─────────────────────────────────────────────────────

def _normalize_entry(entry, r: int):
    """Canonical hashable form: int index, "I", or a sorted tuple of (index, coeff)."""
    if isinstance(entry, Mapping):
        if not entry:
            raise InvalidChainError("span entry must name at least one vector field")
        pairs = []
        for key, coeff in entry.items():
            idx = _normalize_entry(key, r)
            if not isinstance(idx, int):
                raise InvalidChainError("span entries combine indices 0..r only")
            pairs.append((idx, float(coeff)))
        return tuple(sorted(pairs))
    if isinstance(entry, str):
        token = entry.strip()
        if token.upper() == INTERACTION:
            return INTERACTION
        if not token.isdigit():
            raise InvalidChainError(f"unknown chain index {entry!r}")
        entry = int(token)
    if isinstance(entry, (int, np.integer)) and not isinstance(entry, bool) and 0 <= entry <= r:
        return int(entry)
    raise InvalidChainError(f"chain index {entry!r} outside 0..{r} and I")


def normalize_chain(indices: Sequence[ChainEntry], r: int) -> Tuple:
    if isinstance(indices, (str, Mapping)) or not len(indices):
        raise InvalidChainError("chain must be a nonempty sequence of indices")
    return tuple(_normalize_entry(e, r) for e in indices)


def format_chain(chain: Sequence) -> str:
    def fmt(entry) -> str:
        if isinstance(entry, tuple):
            return "(" + "+".join(f"{c:.3g}*K{i}" for i, c in entry) + ")"
        return str(entry)
    return ",".join(fmt(e) for e in chain)


def _apply_entry(T: HarmonicOperator, entry, model) -> HarmonicOperator:
    if entry == INTERACTION:
        return harmonic_commutator(T, -1j * model.H_SB)
    if entry == 0:
        return harmonic_derivation(T, model.joint_drift)
    if isinstance(entry, int):
        G = HarmonicOperator.constant(-1j * model.joint_control_matrices[entry - 1])
        return harmonic_commutator(T, G)
    total = HarmonicOperator.zero(T.dim)
    for idx, coeff in entry:
        total = total + coeff * _apply_entry(T, idx, model)
    return total


def lie_chain_operator(indices: Sequence[ChainEntry], model) -> HarmonicOperator:
    """Operator T(t) whose expectation ⟨ξ|T(t)|ξ⟩ is the chained Lie derivative.

    The rightmost entry acts first on the joint observable. Index 0 is the
    drift derivation with H0 ⊗ I + I ⊗ H_e, index i the control Hᵢ, "I" the
    interaction; all with generators −iH. A mapping {index: coeff} stands
    for the span element Σ coeff·K_index.
    """
    chain = normalize_chain(indices, model.r)
    T = model.joint_observable
    for entry in reversed(chain):
        T = _apply_entry(T, entry, model)
    return T


@dataclass(frozen=True)
class LieChainSpec:
    """One chained Lie derivative evaluated at (time, state)."""

    indices: Tuple
    state: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        state = np.array(self.state, dtype=complex).ravel()
        if abs(np.linalg.norm(state) - 1.0) > 1e-12:
            raise ValueError("chain state must be normalized")
        state.flags.writeable = False
        object.__setattr__(self, "state", state)
        object.__setattr__(self, "indices", tuple(self.indices))
        object.__setattr__(self, "time", float(self.time))

    def value(self, model) -> complex:
        T = lie_chain_operator(self.indices, model)
        return complex(np.vdot(self.state, T(self.time) @ self.state))


class _FlowCache:
    """Short-time propagators of the chain's vector fields, cached per call."""

    def __init__(self, model):
        self.model = model
        self._cache: Dict[Tuple, np.ndarray] = {}

    def generator(self, entry, t: float) -> Tuple[np.ndarray, float]:
        """Hermitian generator of the entry's flow and its rate of time advance."""
        model = self.model
        if entry == INTERACTION:
            return model.H_SB(t), 0.0
        if entry == 0:
            return model.joint_drift, 1.0
        if isinstance(entry, int):
            return model.joint_control_matrices[entry - 1], 0.0
        H = np.zeros((model.factorization.dim,) * 2, dtype=complex)
        rate = 0.0
        for idx, coeff in entry:
            G, advance = self.generator(idx, t)
            H = H + coeff * G
            rate += coeff * advance
        return H, rate

    def flow(self, entry, s: float, t: float) -> Tuple[np.ndarray, float]:
        key = (entry, s, t if entry == INTERACTION else None)
        H, rate = self.generator(entry, t)
        if key not in self._cache:
            self._cache[key] = expm(-1j * s * H)
        return self._cache[key], rate * s


def _spectral_scale(model, chain) -> float:
    cache = _FlowCache(model)
    scale = 0.0
    for entry in chain:
        if entry == INTERACTION:
            H_norm = sum(np.linalg.norm(m, 2) for m in model.H_SB.matrices)
        else:
            H_norm = np.linalg.norm(cache.generator(entry, 0.0)[0], 2)
        scale = max(scale, float(H_norm))
    return scale


def default_oracle_step(model, chain) -> float:
    """ORACLE_BASE_STEP scaled by chain order and the fastest generator on the chain."""
    k = len(chain)
    return ORACLE_BASE_STEP * ORACLE_ORDER_SCALE[k] / max(1.0, _spectral_scale(model, chain))


def _mixed_difference(f, k: int, h: float) -> complex:
    """Central-difference estimate of ∂ᵏf/∂s₁…∂sₖ at the origin."""
    total = 0j
    for signs in itertools.product((1, -1), repeat=k):
        total += np.prod(signs) * f(tuple(sign * h for sign in signs))
    return total / (2 * h) ** k


def lie_chain_oracle(spec: LieChainSpec, model, h: Optional[float] = None) -> complex:
    """Chained Lie derivative from finite differences of composed flows.

    The leftmost entry's flow acts on the state first and the output is read
    after the last flow. Two-level Richardson extrapolation over (h, h/2)
    cancels the O(h²) error of the central differences.
    """
    chain = normalize_chain(spec.indices, model.r)
    if len(chain) > MAX_ORACLE_CHAIN:
        raise InvalidChainError(f"oracle chains are limited to {MAX_ORACLE_CHAIN} entries, got {len(chain)}")
    if spec.state.size != model.factorization.dim:
        raise FactorizationError(f"state has size {spec.state.size}, joint dim is {model.factorization.dim}")
    h = default_oracle_step(model, chain) if h is None else float(h)
    flows = _FlowCache(model)
    C = model.joint_observable

    def output(steps: Tuple[float, ...]) -> complex:
        psi, t = spec.state, spec.time
        for entry, s in zip(chain, steps):
            U, advance = flows.flow(entry, s, t)
            psi = U @ psi
            t += advance
        return complex(np.vdot(psi, C(t) @ psi))

    estimates = [_mixed_difference(output, len(chain), h / 2 ** level) for level in range(ORACLE_LEVELS)]
    for level in range(1, len(estimates)):
        factor = 4 ** level
        estimates = [(factor * fine - coarse) / (factor - 1) for coarse, fine in zip(estimates, estimates[1:])]
    return complex(estimates[0])


# ── Sampled chain suites ──────────────────────────────────────────────────────

def interaction_chains(r: int, max_length: int = 3) -> List[Tuple]:
    """Every chain of length ≤ max_length over {0..r} whose outermost entry is I."""
    chains = []
    for inner in range(max_length):
        for word in itertools.product(range(r + 1), repeat=inner):
            chains.append((INTERACTION,) + word)
    return chains


def chain_scale(model, chain) -> float:
    """‖C‖ times the product of generator norms along the chain."""
    scale = max(1.0, model.joint_observable.norm())
    cache = _FlowCache(model)
    for entry in chain:
        if entry == INTERACTION:
            scale *= max(1.0, model.H_SB.norm())
        else:
            scale *= max(1.0, float(np.linalg.norm(cache.generator(entry, 0.0)[0])))
    return scale


def random_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    psi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return psi / np.linalg.norm(psi)


def random_span_chain(r: int, length: int, rng: np.random.Generator) -> Tuple:
    """Interaction-terminated chain whose inner entries are random real span elements."""
    inner = tuple(
        {j: float(rng.normal()) for j in range(r + 1)}
        for _ in range(length - 1)
    )
    return (INTERACTION,) + inner


def sample_chain_values(model, max_length: int = 3, n_states: int = 20, n_times: int = 5,
                        seed: int = SEED, with_oracle: bool = False, t_max: float = 10.0,
                        chains: Optional[Sequence[Tuple]] = None, threads: int = 1) -> pd.DataFrame:
    """Closed-form (and optionally oracle) chain values at random states and times."""
    rng = np.random.default_rng(seed)
    states = [random_state(model.factorization.dim, rng) for _ in range(n_states)]
    times = rng.uniform(0.0, t_max, size=n_times)
    chains = interaction_chains(model.r, max_length) if chains is None else [
        normalize_chain(c, model.r) for c in chains
    ]

    def evaluate(chain) -> List[dict]:
        T = lie_chain_operator(chain, model)
        scale = chain_scale(model, chain)
        rows = []
        for t in times:
            Tt = T(t)
            for s, psi in enumerate(states):
                row = {
                    "chain": format_chain(chain),
                    "state": s,
                    "time": float(t),
                    "value": complex(np.vdot(psi, Tt @ psi)),
                    "oracle": np.nan + 0j,
                    "scale": scale,
                }
                if with_oracle:
                    row["oracle"] = lie_chain_oracle(LieChainSpec(chain, psi, t), model)
                rows.append(row)
        return rows

    with thread_pool(threads) as pool:
        blocks = list(pool.map(evaluate, chains))
    frame = pd.DataFrame([row for block in blocks for row in block])
    logger.debug("sampled %d chain values over %d chains", len(frame), len(chains))
    return frame


def chains_vanish(frame: pd.DataFrame, tol: float = ZERO_TOL) -> bool:
    """All sampled chain values are zero relative to their scale."""
    return bool((frame["value"].abs() <= tol * frame["scale"]).all())


def oracle_error(frame: pd.DataFrame) -> float:
    """Largest |closed form − oracle| relative to the chain scale."""
    errors = (frame["value"] - frame["oracle"]).abs() / frame["scale"]
    return float(errors.max()) if len(frame) else 0.0


def chains_agree_with(report: ViolationReport, frame: pd.DataFrame, tol: float = ZERO_TOL) -> bool:
    """Sampled chains all vanish exactly when the distribution-level check says decoupled."""
    return chains_vanish(frame, tol) == report.decoupled
