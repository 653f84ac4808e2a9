"""Excel export of fitted curves with confidence bands."""
import io

import pandas as pd
from openpyxl import Workbook
from openpyxl.styles import Alignment, Font, PatternFill

from engine.estimator import z_multiplier

_HEADER_FILL = "1A1A6B"


def theta_columns(fits: pd.DataFrame) -> list[str]:
    return sorted((c for c in fits.columns if c.startswith("theta_")), key=lambda c: int(c.split("_")[1]))


def bands_frame(fits: pd.DataFrame, level: float = 0.99) -> pd.DataFrame:
    """Add lower_m / upper_m = theta_m ∓ z·se_m columns to a fits table."""
    z = z_multiplier(level)
    out = fits.copy()
    for col in theta_columns(fits):
        m = col.split("_")[1]
        out[f"lower_{m}"] = fits[col] - z * fits[f"se_{m}"]
        out[f"upper_{m}"] = fits[col] + z * fits[f"se_{m}"]
    return out


def build_excel(fits: pd.DataFrame, level: float = 0.99, covariate_names=None) -> bytes:
    """One sheet of curves (t0, θ, se, band) and one sheet naming the covariates."""
    df = bands_frame(fits, level)
    wb = Workbook()
    ws = wb.active
    ws.title = "Curves"

    hdr  = Font(bold=True, color="FFFFFF")
    fill = PatternFill("solid", fgColor=_HEADER_FILL)
    cols = list(df.columns)
    for ci, c in enumerate(cols, 1):
        cell = ws.cell(1, ci, c)
        cell.font = hdr
        cell.fill = fill
        cell.alignment = Alignment(horizontal="center")
    for ri, row in enumerate(df.itertuples(index=False), start=2):
        for ci, v in enumerate(row, 1):
            ws.cell(ri, ci, v.item() if hasattr(v, "item") else v)

    meta = wb.create_sheet("Covariates")
    meta.cell(1, 1, "coordinate").font = Font(bold=True)
    meta.cell(1, 2, "name").font = Font(bold=True)
    meta.cell(1, 3, f"band level {level:g}").font = Font(bold=True)
    for m, col in enumerate(theta_columns(fits), start=1):
        meta.cell(m + 1, 1, col)
        meta.cell(m + 1, 2, covariate_names[m - 1] if covariate_names and m <= len(covariate_names) else col)

    buf = io.BytesIO()
    wb.save(buf)
    return buf.getvalue()
