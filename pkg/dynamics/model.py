"""
System model of the augmented open quantum control system.

The joint generator is
    −i (H0 ⊗ I + I ⊗ H_e + Σᵢ uᵢ(t)·Hᵢ + H_SB(t))
with Hᵢ acting on the system factor (or on the joint space when flagged)
and the output y(t) = ⟨ψ|C(t)|ψ⟩.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from config import HERMITIAN_TOL
from errors import FactorizationError, FeedbackLawError, HermiticityError
from operators.algebra import HilbertFactorization, frozen, is_hermitian
from operators.harmonic import HarmonicOperator, as_harmonic


# ── Control laws ──────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ScheduleLaw:
    """Piecewise-constant controls: values[k] holds on [times[k], times[k+1])."""

    times: Tuple[float, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if len(self.times) != values.shape[0]:
            raise ValueError(f"{len(self.times)} breakpoints but {values.shape[0]} control rows")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("schedule breakpoints must be strictly increasing")
        values.flags.writeable = False
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, values: Sequence[float]) -> "ScheduleLaw":
        return cls((0.0,), np.atleast_2d(values))

    @property
    def n_controls(self) -> int:
        return self.values.shape[1]

    @property
    def required_outputs(self) -> Tuple[str, ...]:
        return ()

    def at(self, t: float) -> np.ndarray:
        idx = int(np.searchsorted(self.times, t, side="right")) - 1
        return self.values[max(idx, 0)]

    def controls(self, t: float, outputs: Mapping[str, complex]) -> np.ndarray:
        return self.at(t)


@dataclass(frozen=True)
class FeedbackLaw:
    """Affine expectation-value feedback u = α(y) + β(y)·v(t).

    α(y) = alpha0 + alpha_gain · Re(y) and β(y) = beta0 + Σₖ Re(yₖ)·beta_gain[k],
    where y lists the named auxiliary outputs in `outputs` order.
    """

    outputs: Tuple[str, ...]
    alpha0: np.ndarray
    alpha_gain: np.ndarray
    beta0: np.ndarray
    beta_gain: np.ndarray
    reference: ScheduleLaw

    def __post_init__(self):
        r = len(np.atleast_1d(self.alpha0))
        m = len(self.outputs)
        shapes = {
            "alpha0": (np.asarray(self.alpha0, dtype=float).reshape(r), (r,)),
            "alpha_gain": (np.asarray(self.alpha_gain, dtype=float).reshape(r, m), (r, m)),
            "beta0": (np.asarray(self.beta0, dtype=float).reshape(r, r), (r, r)),
            "beta_gain": (np.asarray(self.beta_gain, dtype=float).reshape(m, r, r), (m, r, r)),
        }
        for name, (arr, _) in shapes.items():
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "outputs", tuple(self.outputs))
        if self.reference.n_controls != r:
            raise FeedbackLawError(f"reference has {self.reference.n_controls} channels, law has {r}")

    @property
    def n_controls(self) -> int:
        return self.alpha0.shape[0]

    @property
    def required_outputs(self) -> Tuple[str, ...]:
        return self.outputs

    def controls(self, t: float, outputs: Mapping[str, complex]) -> np.ndarray:
        try:
            y = np.array([np.real(outputs[name]) for name in self.outputs], dtype=float)
        except KeyError as exc:
            raise FeedbackLawError(f"feedback law references undefined output {exc.args[0]!r}") from exc
        alpha = self.alpha0 + self.alpha_gain @ y
        beta = self.beta0 + np.tensordot(y, self.beta_gain, axes=1) if len(y) else self.beta0
        return alpha + beta @ self.reference.at(t)


# ── System model ──────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class SystemModel:
    """Tuple (H0, H_e, {Hᵢ}, H_SB, C) on a factorized joint space.

    Either `H_SB` or `interaction_factors` (pairs (Sₖ, Bₖ) with
    H_SB = Σ Sₖ ⊗ Bₖ) must be given; when both are given they must agree.
    """

    factorization: HilbertFactorization
    H0_sys: np.ndarray
    H_env: np.ndarray
    observable: HarmonicOperator
    controls: Tuple[np.ndarray, ...] = ()
    H_SB: Optional[HarmonicOperator] = None
    interaction_factors: Optional[Tuple[Tuple[np.ndarray, np.ndarray], ...]] = None
    joint_controls: bool = False
    control_law: Optional[object] = None
    auxiliary: Dict[str, HarmonicOperator] = field(default_factory=dict)
    truncated_environment: bool = True
    name: str = "model"
    tol: float = HERMITIAN_TOL

    def __post_init__(self):
        fac = self.factorization
        set_ = lambda key, value: object.__setattr__(self, key, value)

        H0 = frozen(self.H0_sys)
        He = frozen(self.H_env)
        if H0.shape[0] != fac.d_s:
            raise FactorizationError(f"drift has dim {H0.shape[0]}, system dim is {fac.d_s}")
        if He.shape[0] != fac.d_e:
            raise FactorizationError(f"environment Hamiltonian has dim {He.shape[0]}, environment dim is {fac.d_e}")
        expected = fac.dim if self.joint_controls else fac.d_s
        controls = tuple(frozen(H) for H in self.controls)
        for i, H in enumerate(controls, start=1):
            if H.shape[0] != expected:
                raise FactorizationError(f"control H{i} has dim {H.shape[0]}, expected {expected}")
        for label, H in [("H0", H0), ("H_e", He)] + [(f"H{i}", H) for i, H in enumerate(controls, start=1)]:
            if not is_hermitian(H, self.tol):
                raise HermiticityError(f"{label} is not Hermitian")
        set_("H0_sys", H0)
        set_("H_env", He)
        set_("controls", controls)

        factors = None
        if self.interaction_factors is not None:
            factors = tuple((frozen(S), frozen(B)) for S, B in self.interaction_factors)
            built = sum((fac.product(S, B) for S, B in factors), np.zeros((fac.dim, fac.dim), dtype=complex))
            built = HarmonicOperator.constant(built)
        if self.H_SB is None and factors is None:
            raise FactorizationError("model needs H_SB or interaction_factors")
        H_SB = built if self.H_SB is None else as_harmonic(self.H_SB)
        if H_SB.dim != fac.dim:
            raise FactorizationError(f"H_SB has dim {H_SB.dim}, joint dim is {fac.dim}")
        if factors is not None and (H_SB - built).norm() > self.tol:
            raise FactorizationError("interaction_factors do not reproduce H_SB")
        if not H_SB.is_hermitian(self.tol):
            raise HermiticityError("H_SB is not Hermitian at every t")
        set_("H_SB", H_SB)
        set_("interaction_factors", factors)

        C = as_harmonic(self.observable)
        if C.dim not in (fac.d_s, fac.dim):
            raise FactorizationError(f"observable has dim {C.dim}, expected {fac.d_s} or {fac.dim}")
        set_("observable", C)

        aux = {}
        for key, op in dict(self.auxiliary).items():
            op = as_harmonic(op)
            if op.dim not in (fac.d_s, fac.dim):
                raise FactorizationError(f"auxiliary output {key!r} has dim {op.dim}")
            aux[key] = op
        set_("auxiliary", aux)

        law = self.control_law
        if law is not None:
            if law.n_controls != len(controls):
                raise FeedbackLawError(f"control law drives {law.n_controls} channels, model has {len(controls)}")
            missing = [k for k in law.required_outputs if k not in aux and k != "y"]
            if missing:
                raise FeedbackLawError(f"feedback law references undefined outputs {missing}")

    # ── Joint-space views ──

    @property
    def r(self) -> int:
        return len(self.controls)

    def lift(self, op) -> HarmonicOperator:
        """Harmonic operator on the joint space (system operators get ⊗ I_e)."""
        op = as_harmonic(op)
        if op.dim == self.factorization.dim:
            return op
        return op.map_matrices(self.factorization.embed_system)

    @cached_property
    def joint_drift(self) -> np.ndarray:
        """H0 ⊗ I + I ⊗ H_e."""
        fac = self.factorization
        return fac.embed_system(self.H0_sys) + fac.embed_env(self.H_env)

    @cached_property
    def joint_control_matrices(self) -> Tuple[np.ndarray, ...]:
        if self.joint_controls:
            return self.controls
        return tuple(self.factorization.embed_system(H) for H in self.controls)

    @cached_property
    def joint_observable(self) -> HarmonicOperator:
        return self.lift(self.observable)

    @property
    def system_observable(self) -> bool:
        return self.observable.dim == self.factorization.d_s

    def default_controls(self) -> np.ndarray:
        return np.zeros(self.r)
