"""
Shared text formatting for the command reports.
Numbers print with three significant digits, residuals in scientific notation.
"""

import pandas as pd

# ── Layout ────────────────────────────────────────────────────────────────────

RULE = "─"
LABEL_WIDTH = 26

VERDICT_LABELS = {
    True: "decoupled",
    False: "not decoupled",
}

CAP_LABELS = {
    "max_dim": "dimension cap",
    "max_ad_depth": "ad-depth cap",
    "max_stage": "stage cap",
}


# ── Value Formatting ──────────────────────────────────────────────────────────

def fmt_number(value) -> str:
    return f"{float(value):.3g}"


def fmt_residual(value) -> str:
    return f"{float(value):.2e}"


def fmt_frequency(value) -> str:
    value = float(value)
    return "0" if value == 0 else f"{value:+.3g}"


def yes_no(flag: bool) -> str:
    return "yes" if flag else "no"


def verdict_tag(decoupled: bool, kind: str = "open-loop") -> str:
    """Return e.g. 'open-loop decoupled'."""
    return f"{kind} {VERDICT_LABELS[bool(decoupled)]}"


def cap_label(cap_hit) -> str:
    return CAP_LABELS.get(cap_hit, str(cap_hit)) if cap_hit else "none"


# ── Blocks ────────────────────────────────────────────────────────────────────

def banner(command: str, scenario: str) -> str:
    title = f"{command} · {scenario}"
    return f"{title}\n{'═' * len(title)}"


def section_header(title: str) -> str:
    return f"\n{title}\n{RULE * len(title)}"


def kv_line(label: str, value) -> str:
    return f"  {label:<{LABEL_WIDTH}} {value}"


def frame_table(frame: pd.DataFrame, float_format=fmt_number) -> str:
    """Indented plain-text table of a DataFrame."""
    if frame.empty:
        return "  (none)"
    text = frame.to_string(index=False, float_format=float_format)
    return "\n".join(f"  {line}" for line in text.splitlines())


def join_blocks(*blocks) -> str:
    return "\n".join(b for b in blocks if b) + "\n"
