"""
Joint system-environment wavefunction propagation.

Each step applies exp(−i·H(t_mid)·dt) with the generator sampled at the
step midpoint. Outputs y(t) = ⟨ψ|C(t)|ψ⟩, controls and the norm defect are
recorded before every step. Feedback controls are held from the left
endpoint, where the outputs they read are measured.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.linalg import expm

from config import (
    AGREEMENT_FACTOR,
    DEFAULT_DT,
    MAX_DT_REFINEMENTS,
    NORM_DEFECT_BOUND,
    TOP_LEVEL_WARNING,
    ZERO_TOL,
    thread_pool,
)
from errors import DimensionMismatchError, NormDefectError
from analytics.distribution import ClosureReport, OperatorSpace, generate_distribution
from analytics.invariance import ViolationReport, check_open_loop
from dynamics.model import FeedbackLaw, SystemModel
from operators.algebra import as_matrix, normalized

logger = logging.getLogger(__name__)


# ── Helpers ───────────────────────────────────────────────────────────────────

def expectation(psi, M) -> complex:
    """⟨ψ|M|ψ⟩."""
    psi = np.asarray(psi, dtype=complex).ravel()
    return complex(np.vdot(psi, as_matrix(M) @ psi))


def product_state(psi_s, psi_e) -> np.ndarray:
    """Normalized ψ_s ⊗ ψ_e."""
    return normalized(np.kron(np.asarray(psi_s, dtype=complex).ravel(),
                              np.asarray(psi_e, dtype=complex).ravel()))


# ── Trace records ─────────────────────────────────────────────────────────────

@dataclass
class TraceRecord:
    times: np.ndarray
    outputs: np.ndarray
    controls: np.ndarray
    norm_defect: np.ndarray
    dt: float
    interaction_on: bool
    top_level_population: float = 0.0
    auxiliary: Dict[str, np.ndarray] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def max_norm_defect(self) -> float:
        return float(np.max(self.norm_defect)) if len(self) else 0.0

    def to_frame(self) -> pd.DataFrame:
        """Columns t, re_y, im_y, u_1..u_r, norm_defect."""
        frame = pd.DataFrame({
            "t": self.times,
            "re_y": self.outputs.real,
            "im_y": self.outputs.imag,
        })
        for i in range(self.controls.shape[1]):
            frame[f"u_{i + 1}"] = self.controls[:, i]
        frame["norm_defect"] = self.norm_defect
        return frame

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, encoding="utf-8", lineterminator="\n",
                               float_format="%.12g")
        return path


# ── Propagation ───────────────────────────────────────────────────────────────

class _StepTooLarge(Exception):
    pass


def _step_count(t0: float, t1: float, dt: float) -> int:
    return max(1, math.ceil((t1 - t0) / dt - 1e-9))


def _run(model: SystemModel, psi0: np.ndarray, t0: float, t1: float, dt: float,
         interaction_on: bool, law) -> TraceRecord:
    fac = model.factorization
    drift = model.joint_drift
    controls = model.joint_control_matrices
    C = model.joint_observable
    aux = {name: model.lift(op) for name, op in model.auxiliary.items()}
    constant_coupling = model.H_SB.is_constant or not interaction_on
    feedback = isinstance(law, FeedbackLaw)
    cacheable = constant_coupling and not feedback
    H_SB_const = model.H_SB(0.0) if interaction_on and model.H_SB.is_constant else None
    cache: Dict[Tuple[float, ...], np.ndarray] = {}

    n = 0 if t1 == t0 else _step_count(t0, t1, dt)
    h = (t1 - t0) / n if n else dt
    times = t0 + h * np.arange(n + 1)
    ys = np.zeros(n + 1, dtype=complex)
    us = np.zeros((n + 1, model.r))
    defects = np.zeros(n + 1)
    aux_trace = {name: np.zeros(n + 1, dtype=complex) for name in aux}
    top = 0.0

    psi = psi0.copy()
    for k, t in enumerate(times):
        outputs = {"y": expectation(psi, C(t))}
        for name, op in aux.items():
            outputs[name] = expectation(psi, op(t))
            aux_trace[name][k] = outputs[name]
        ys[k] = outputs["y"]
        defects[k] = abs(np.linalg.norm(psi) - 1.0)
        if defects[k] > NORM_DEFECT_BOUND:
            raise _StepTooLarge(defects[k])
        top = max(top, float(fac.env_populations(psi)[-1]))
        u = law.controls(t, outputs) if law is not None else model.default_controls()
        us[k] = u
        if k == n:
            break
        if law is not None and not feedback:
            u = law.controls(t + h / 2, outputs)

        key = tuple(np.round(u, 15))
        if cacheable and key in cache:
            U = cache[key]
        else:
            H = drift + sum((ui * Hi for ui, Hi in zip(u, controls)), np.zeros_like(drift))
            if interaction_on:
                H = H + (H_SB_const if H_SB_const is not None else model.H_SB(t + h / 2))
            U = expm(-1j * h * H)
            if cacheable:
                cache[key] = U
        psi = U @ psi

    return TraceRecord(times, ys, us, defects, h, interaction_on, top, aux_trace)


def propagate(model: SystemModel, psi0, t_span: Sequence[float], dt: float = DEFAULT_DT,
              interaction_on: bool = True, control_law=None) -> TraceRecord:
    """Integrate the joint Schrödinger equation and record the output trace.

    The step is halved up to MAX_DT_REFINEMENTS times when the norm defect
    exceeds NORM_DEFECT_BOUND; past that `NormDefectError` is raised.
    """
    psi0 = np.asarray(psi0, dtype=complex).ravel()
    if psi0.size != model.factorization.dim:
        raise DimensionMismatchError(f"initial state has size {psi0.size}, joint dim is {model.factorization.dim}")
    if abs(np.linalg.norm(psi0) - 1.0) > NORM_DEFECT_BOUND:
        raise ValueError("initial state must be normalized")
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    t0, t1 = (float(x) for x in t_span)
    if t1 < t0:
        raise ValueError(f"t_span must be increasing, got {t_span}")
    law = model.control_law if control_law is None else control_law

    step = dt
    for attempt in range(MAX_DT_REFINEMENTS + 1):
        try:
            trace = _run(model, psi0, t0, t1, step, interaction_on, law)
            break
        except _StepTooLarge as exc:
            if attempt < MAX_DT_REFINEMENTS:
                logger.warning("norm defect %.3g at dt=%.3g, halving the step", exc.args[0], step)
                step /= 2
    else:
        raise NormDefectError(f"norm defect above {NORM_DEFECT_BOUND:g} after {MAX_DT_REFINEMENTS} step refinements")

    if model.truncated_environment and trace.top_level_population > TOP_LEVEL_WARNING:
        logger.warning("top environment level reached population %.3g; truncation may be unreliable",
                       trace.top_level_population)
    return trace


def energy_drift(model: SystemModel, psi0, t_span: Sequence[float], dt: float = DEFAULT_DT) -> float:
    """Relative change of ⟨H⟩ over t_span with controls off and a constant H_SB."""
    if not model.H_SB.is_constant:
        raise ValueError("energy is conserved only for a time-independent interaction")
    H = model.joint_drift + model.H_SB(0.0)
    measured = replace(model, auxiliary={"energy": H}, control_law=None)
    trace = propagate(measured, psi0, t_span, dt)
    energy = trace.auxiliary["energy"].real
    return float(np.max(np.abs(energy - energy[0])) / max(1.0, abs(energy[0])))


# ── Invariance experiments ────────────────────────────────────────────────────

def model_distribution(model: SystemModel, caps=None, projector=None,
                       threads: int = 1) -> Tuple[OperatorSpace, ClosureReport]:
    """Distribution of the model's observable, on the system space when possible."""
    if model.system_observable and not model.joint_controls:
        return generate_distribution(model.observable, model.H0_sys, model.controls, caps,
                                     projector=projector, threads=threads)
    if projector is not None:
        projector = model.factorization.lift(projector)
    return generate_distribution(model.joint_observable, model.joint_drift,
                                 model.joint_control_matrices, caps,
                                 projector=projector, threads=threads)


def trace_deviation(a: TraceRecord, b: TraceRecord) -> float:
    """max_t |y_a(t) − y_b(t)|, interpolating b onto a's grid when the steps differ."""
    if len(a) == len(b) and np.allclose(a.times, b.times):
        return float(np.max(np.abs(a.outputs - b.outputs)))
    re = np.interp(a.times, b.times, b.outputs.real)
    im = np.interp(a.times, b.times, b.outputs.imag)
    return float(np.max(np.abs(a.outputs - (re + 1j * im))))


@dataclass
class InvarianceExperimentReport:
    deviations: Tuple[float, ...]
    max_deviation: float
    traces: List[Tuple[TraceRecord, TraceRecord]]
    algebraic: ViolationReport
    closure: ClosureReport
    threshold: float

    @property
    def simulation_decoupled(self) -> bool:
        return self.max_deviation <= self.threshold

    @property
    def agreement(self) -> bool:
        return self.simulation_decoupled == self.algebraic.decoupled


def invariance_experiment(model: SystemModel, psi0_set: Sequence, t_span: Sequence[float],
                          dt: float = DEFAULT_DT, *, tol: float = ZERO_TOL, caps=None,
                          projector=None, threads: int = 1) -> InvarianceExperimentReport:
    """Compare y(t) with the interaction on and off and set it against the algebraic verdict."""
    states = [np.asarray(psi, dtype=complex).ravel() for psi in psi0_set]
    if not states:
        raise ValueError("invariance experiment needs at least one initial state")

    space, closure = model_distribution(model, caps, projector, threads)
    algebraic = check_open_loop(space, model.H_SB, model.factorization, tol)

    tasks = [(psi, on) for psi in states for on in (True, False)]
    with thread_pool(threads) as pool:
        runs = list(pool.map(lambda task: propagate(model, task[0], t_span, dt, task[1]), tasks))
    pairs = list(zip(runs[0::2], runs[1::2]))
    deviations = tuple(trace_deviation(on, off) for on, off in pairs)
    report = InvarianceExperimentReport(
        deviations=deviations,
        max_deviation=max(deviations),
        traces=pairs,
        algebraic=algebraic,
        closure=closure,
        threshold=AGREEMENT_FACTOR * NORM_DEFECT_BOUND,
    )
    logger.info("invariance experiment: max deviation %.3g, algebraic decoupled=%s, agreement=%s",
                report.max_deviation, algebraic.decoupled, report.agreement)
    return report
