"""DFS report: invariant observable basis, observable membership, leakage and bracket closure."""

from typing import Optional, Sequence

import numpy as np
import pandas as pd

from analytics.dfs import InvariantObservableSpace, LeakageWitness
from analytics.distribution import OperatorSpace
from components.styles import (
    banner,
    fmt_residual,
    frame_table,
    join_blocks,
    kv_line,
    section_header,
    yes_no,
)

MAX_LISTED = 80


def _dense_label(M: np.ndarray) -> str:
    """Sparse listing of a non-canonical basis element."""
    idx = np.argwhere(np.abs(M) > 1e-9)
    parts = [f"({i},{j}):{M[i, j].real:+.3g}{M[i, j].imag:+.3g}i" for i, j in idx[:4]]
    more = " …" if len(idx) > 4 else ""
    return " ".join(parts) + more


def basis_table(space: InvariantObservableSpace) -> pd.DataFrame:
    if space.labels is not None:
        names = list(space.labels)
    else:
        names = [_dense_label(M) for M in space.basis]
    return pd.DataFrame({"#": range(1, len(names) + 1), "element": names}).head(MAX_LISTED)


def render(name: str, space: InvariantObservableSpace, observable_residuals: Sequence[float],
           contained: bool, witness: Optional[LeakageWitness] = None,
           interactions: Optional[OperatorSpace] = None, closure_ok: Optional[bool] = None) -> str:
    blocks = [
        banner("dfs", name),
        section_header("Invariant observables"),
        kv_line("dimension", space.dimension),
        kv_line("fixed-point iterations", space.iterations),
        kv_line("per-iteration dims", ", ".join(str(d) for d in space.per_iteration_dims) or "-"),
        frame_table(basis_table(space)),
    ]
    if space.dimension > MAX_LISTED:
        blocks.append(f"  … {space.dimension - MAX_LISTED} more")

    blocks += [
        section_header("Observable"),
        kv_line("inside invariant space", yes_no(contained)),
        kv_line("projection residual", fmt_residual(max(observable_residuals, default=0.0))),
    ]
    if witness is not None:
        blocks.append(kv_line("leakage witness", f"{witness.describe()} norm {fmt_residual(witness.norm)}"))

    if interactions is not None:
        blocks += [
            section_header("Invariant interactions"),
            kv_line("dimension", len(interactions)),
            kv_line("bracket closure", yes_no(bool(closure_ok))),
        ]

    blocks.append(f"\ninvariant space dim {space.dimension}, observable "
                  f"{'inside' if contained else 'outside'}")
    return join_blocks(*blocks)
