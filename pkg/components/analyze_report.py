"""Analyze report: distribution closure, open-loop and feedback verdicts, sampled Lie chains."""

from typing import Optional

import pandas as pd

from analytics.distribution import ClosureReport, OperatorSpace
from analytics.invariance import ViolationReport
from components.styles import (
    banner,
    cap_label,
    fmt_frequency,
    fmt_residual,
    frame_table,
    join_blocks,
    kv_line,
    section_header,
    verdict_tag,
    yes_no,
)


def element_label(index: int) -> str:
    """The first basis element is the normalized observable itself."""
    return "C" if index == 0 else f"T{index + 1}"


def witness_line(report: ViolationReport, target: str = "H_SB") -> str:
    if report.witness is None:
        return "none (empty distribution)"
    idx, freq, norm = report.witness
    return f"[{element_label(idx)},{target}] at μ={fmt_frequency(freq)}, norm {fmt_residual(norm)}"


def chain_summary(frame: pd.DataFrame) -> pd.DataFrame:
    """Worst relative chain value per chain."""
    if frame.empty:
        return pd.DataFrame(columns=["chain", "max |value|/scale"])
    rel = frame.assign(rel=frame["value"].abs() / frame["scale"])
    out = rel.groupby("chain", sort=False)["rel"].max().reset_index()
    return out.rename(columns={"rel": "max |value|/scale"})


def _residual_table(report: ViolationReport) -> pd.DataFrame:
    return pd.DataFrame({
        "element": [element_label(i) for i in range(len(report.per_element_norms))],
        "residual": [fmt_residual(n) for n in report.per_element_norms],
    })


def render(name: str, space: OperatorSpace, closure: ClosureReport,
           open_loop: ViolationReport, feedback: Optional[ViolationReport] = None,
           chains: Optional[pd.DataFrame] = None, chains_agree: Optional[bool] = None) -> str:
    blocks = [banner("analyze", name)]

    # ── Distribution ──
    blocks += [
        section_header("Operator distribution"),
        kv_line("dimension", len(space)),
        kv_line("converged", f"{yes_no(closure.converged)} after {closure.iterations} stage(s)"),
        kv_line("per-stage dims", ", ".join(str(d) for d in closure.per_stage_dims) or "-"),
        kv_line("frequencies", ", ".join(fmt_frequency(f) for f in closure.frequencies) or "-"),
        kv_line("cap hit", cap_label(closure.cap_hit)),
    ]
    if closure.note:
        blocks.append(kv_line("note", closure.note))

    # ── Open loop ──
    blocks += [
        section_header("Open-loop decoupling"),
        kv_line("verdict", verdict_tag(open_loop.decoupled)),
        kv_line("worst ‖[T,H_SB]‖", fmt_residual(open_loop.worst_norm)),
        kv_line("threshold", fmt_residual(open_loop.tol)),
    ]
    if not open_loop.decoupled:
        blocks.append(kv_line("witness", witness_line(open_loop)))
    blocks.append(frame_table(_residual_table(open_loop)))

    # ── Feedback ──
    if feedback is not None:
        blocks += [
            section_header("Feedback condition"),
            kv_line("verdict", verdict_tag(feedback.decoupled, "feedback")),
            kv_line("worst residual", fmt_residual(feedback.worst_norm)),
        ]
        if not feedback.decoupled:
            blocks.append(kv_line("witness", witness_line(feedback)))

    # ── Chains ──
    if chains is not None:
        blocks += [
            section_header("Sampled Lie chains"),
            kv_line("samples", len(chains)),
            frame_table(chain_summary(chains), float_format=fmt_residual),
        ]
        if chains_agree is not None:
            blocks.append(kv_line("consistent with verdict", yes_no(chains_agree)))

    blocks.append(f"\ndistribution dim {len(space)}, {verdict_tag(open_loop.decoupled)}")
    if not open_loop.decoupled and open_loop.witness is not None:
        blocks.append(f"residual {witness_line(open_loop)}")
    return join_blocks(*blocks)