"""Number formatting for the results viewer."""
import math


def fmt_num(val, digits: int = 4) -> str:
    if val is None or (isinstance(val, float) and math.isnan(val)):
        return "—"
    if isinstance(val, int):
        return f"{val:,}"
    return f"{val:.{digits}f}"


def fmt_pct(val) -> str:
    if val is None or (isinstance(val, float) and math.isnan(val)):
        return "—"
    return f"{val:.1%}"


def color_coverage(val, lo: float = 0.90, hi: float = 0.98):
    """Styler rule: red outside the acceptable coverage window, green inside."""
    if isinstance(val, (int, float)) and not math.isnan(val):
        if val < lo or val > hi:
            return "color: red; font-weight: bold"
        return "color: green"
    return ""
