"""Simulate report: interaction on/off deviations against the algebraic verdict."""

from pathlib import Path
from typing import Sequence

import pandas as pd

from components.styles import (
    banner,
    fmt_number,
    fmt_residual,
    frame_table,
    join_blocks,
    kv_line,
    section_header,
    verdict_tag,
    yes_no,
)
from dynamics.propagation import InvarianceExperimentReport


def deviation_table(report: InvarianceExperimentReport) -> pd.DataFrame:
    rows = []
    for k, (dev, (on, off)) in enumerate(zip(report.deviations, report.traces)):
        rows.append({
            "state": k,
            "max |y_on - y_off|": fmt_residual(dev),
            "dt": fmt_number(on.dt),
            "norm defect": fmt_residual(max(on.max_norm_defect, off.max_norm_defect)),
            "top level pop.": fmt_residual(on.top_level_population),
        })
    return pd.DataFrame(rows)


def render(name: str, report: InvarianceExperimentReport, written: Sequence[Path] = ()) -> str:
    blocks = [
        banner("simulate", name),
        section_header("Trajectories"),
        frame_table(deviation_table(report)),
        section_header("Verdicts"),
        kv_line("simulation", verdict_tag(report.simulation_decoupled, "trajectory")),
        kv_line("algebraic", verdict_tag(report.algebraic.decoupled)),
        kv_line("threshold", fmt_residual(report.threshold)),
    ]
    if written:
        blocks += [section_header("Traces written")] + [f"  {p}" for p in written]

    detail = "" if report.simulation_decoupled or not report.agreement else " (both detect coupling)"
    blocks.append(f"\nagreement: {yes_no(report.agreement)}{detail}, max dev {fmt_residual(report.max_deviation)}")
    return join_blocks(*blocks)
