"""
decoq command line

Loads a YAML scenario, runs the algebraic decoupling analysis, the
decoherence-free observable search or the on/off simulation experiment,
and prints a plain-text report. Exit codes: 0 decoupled, 1 not, 2 error.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import yaml

from config import FEEDBACK_MAX_DIM, Settings
from errors import DecoqError, DecompositionError, DimensionMismatchError
from analytics.dfs import (
    find_invariant_interactions,
    find_invariant_observables,
    leakage_witness,
    verify_bracket_closure,
)
from analytics.distribution import ClosureCaps, generate_distribution
from analytics.invariance import chains_agree_with, check_feedback, check_open_loop, sample_chain_values
from components import analyze_report, dfs_report, simulate_report
from data.scenario import BuiltScenario, load_scenario
from dynamics.propagation import invariance_experiment, model_distribution

logger = logging.getLogger("decoq")

EXIT_DECOUPLED = 0
EXIT_COUPLED = 1
EXIT_ERROR = 2

COMMANDS = ("analyze", "dfs", "simulate", "report")


def _caps(settings: Settings, max_dim: Optional[int] = None) -> ClosureCaps:
    return ClosureCaps(settings.max_ad_depth, settings.max_stage, max_dim or settings.max_dim)


def _out_dir(built: BuiltScenario, out: Optional[str]) -> Path:
    if out:
        return Path(out)
    return Path(built.outputs.get("traces", f"out/{built.name}"))


# ── Commands ──────────────────────────────────────────────────────────────────

def run_analyze(built: BuiltScenario) -> Tuple[int, str]:
    """Distribution, open-loop and feedback verdicts, sampled chains."""
    model, s = built.model, built.settings
    space, closure = model_distribution(model, _caps(s), built.projector, s.threads)
    open_loop = check_open_loop(space, model.H_SB, model.factorization, s.tol)

    projector = None if built.projector is None else model.factorization.lift(built.projector)
    joint_space, joint_closure = generate_distribution(
        model.joint_observable, model.joint_drift, model.joint_control_matrices,
        _caps(s, s.max_dim or FEEDBACK_MAX_DIM), projector=projector,
        rank_tol=s.rank_tol, freq_tol=s.freq_tol, threads=s.threads,
    )
    if not joint_closure.converged:
        logger.warning("feedback distribution stopped at the %s; its verdict is provisional",
                       joint_closure.cap_hit)
    feedback = check_feedback(joint_space, model.H_SB, model.factorization)

    samples = built.samples
    chains = sample_chain_values(
        model, max_length=samples["max_length"], n_states=samples["states"],
        n_times=samples["times"], seed=s.seed, t_max=max(built.t_span[1], 1.0), threads=s.threads,
    )
    agree = chains_agree_with(open_loop, chains, s.tol)

    text = analyze_report.render(built.name, space, closure, open_loop, feedback, chains, agree)
    return (EXIT_DECOUPLED if open_loop.decoupled else EXIT_COUPLED), text


def run_dfs(built: BuiltScenario) -> Tuple[int, str]:
    """Invariant observables, membership of the scenario observable, invariant interactions."""
    model, s = built.model, built.settings
    if model.joint_controls:
        raise DecompositionError("dfs needs controls acting on the system factor")
    if not model.system_observable:
        raise DimensionMismatchError("dfs needs an observable on the system factor")
    space = find_invariant_observables(model.H0_sys, model.controls, built.system_factors, tol=s.rank_tol)

    terms = model.observable.matrices
    residuals = [space.residual(M) / max(1.0, float(np.linalg.norm(M))) for M in terms]
    contained = all(space.contains(M) for M in terms)
    witness = None
    if not contained:
        worst = terms[int(np.argmax(residuals))]
        witness = leakage_witness(worst, model.H0_sys, model.controls, built.system_factors, tol=s.rank_tol)

    interactions = find_invariant_interactions(model.observable, model.H0_sys, model.controls,
                                               tol=s.rank_tol, caps=_caps(s), threads=s.threads)
    closure_ok = verify_bracket_closure(interactions, model.H0_sys, model.controls,
                                        tol=s.rank_tol, threads=s.threads)

    text = dfs_report.render(built.name, space, residuals, contained, witness, interactions, closure_ok)
    return (EXIT_DECOUPLED if contained else EXIT_COUPLED), text


def run_simulate(built: BuiltScenario, out: Optional[str] = None) -> Tuple[int, str]:
    """Interaction on/off trajectories with CSV traces."""
    model, s = built.model, built.settings
    report = invariance_experiment(model, built.initial_states, built.t_span, s.dt, tol=s.tol,
                                   caps=_caps(s), projector=built.projector, threads=s.threads)
    out_dir = _out_dir(built, out)
    written: List[Path] = []
    for k, (on, off) in enumerate(report.traces):
        written.append(on.write_csv(out_dir / f"{built.name}_state{k}_on.csv"))
        written.append(off.write_csv(out_dir / f"{built.name}_state{k}_off.csv"))

    text = simulate_report.render(built.name, report, written)
    ok = report.agreement and report.simulation_decoupled
    return (EXIT_DECOUPLED if ok else EXIT_COUPLED), text


def run_report(built: BuiltScenario, out: Optional[str] = None) -> Tuple[int, str]:
    """All three commands; the report is also written to disk."""
    codes, texts = [], []
    for runner in (run_analyze, run_dfs):
        if runner is run_dfs and (built.system_factors is None or built.model.joint_controls):
            texts.append("dfs skipped: the interaction is not given as system/environment factors\n")
            continue
        code, text = runner(built)
        codes.append(code)
        texts.append(text)
    code, text = run_simulate(built, out)
    codes.append(code)
    texts.append(text)

    body = "\n".join(texts)
    path = Path(out) / "report.txt" if out else Path(
        built.outputs.get("report", str(_out_dir(built, None) / "report.txt"))
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(body, encoding="utf-8")
    logger.info("report written to %s", path)
    return max(codes), body + f"\nreport written to {path}\n"


# ── Entry point ───────────────────────────────────────────────────────────────

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="decoq", description=__doc__.strip().splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("scenario", help="path to a scenario YAML file")
    parser.add_argument("--tol", type=float, help="zero tolerance for decoupling checks")
    parser.add_argument("--max-dim", type=int, help="cap on the distribution dimension")
    parser.add_argument("--dt", type=float, help="propagation step")
    parser.add_argument("--out", help="directory for traces and the report")
    parser.add_argument("--seed", type=int, help="seed for random states in chain sampling")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG")
    return parser


def _log_level(verbosity: int) -> int:
    return {0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=_log_level(args.verbose),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )

    overrides = {"tol": args.tol, "max_dim": args.max_dim, "dt": args.dt, "seed": args.seed}
    try:
        built = load_scenario(args.scenario, overrides)
        if args.command == "analyze":
            code, text = run_analyze(built)
        elif args.command == "dfs":
            code, text = run_dfs(built)
        elif args.command == "simulate":
            code, text = run_simulate(built, args.out)
        else:
            code, text = run_report(built, args.out)
    except (DecoqError, yaml.YAMLError, OSError, ValueError) as exc:
        logger.debug("command failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:
        logger.exception("%s failed unexpectedly", args.command)
        print(f"error: internal failure: {exc!r}", file=sys.stderr)
        return EXIT_ERROR

    sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
