"""Fitted coefficient curves with pointwise confidence bands."""
import plotly.graph_objects as go
import streamlit as st

from utils.export import bands_frame, theta_columns
from utils.fmt import fmt_num

_C_CURVE  = "#1a1a6b"
_C_BAND   = "rgba(26,26,107,0.12)"
_C_ZERO   = "#94a3b8"
_TEMPLATE = "plotly_white"


def curve_figure(fits, m: int, name: str, level: float) -> go.Figure:
    df  = bands_frame(fits, level)
    fig = go.Figure()
    fig.add_trace(go.Scatter(
        x=df["t0"], y=df[f"upper_{m}"],
        mode="lines", line=dict(width=0), showlegend=False, hoverinfo="skip"))
    fig.add_trace(go.Scatter(
        x=df["t0"], y=df[f"lower_{m}"],
        mode="lines", line=dict(width=0),
        fill="tonexty", fillcolor=_C_BAND, name=f"{level:.0%} band"))
    fig.add_trace(go.Scatter(
        x=df["t0"], y=df[f"theta_{m}"],
        mode="lines+markers", line=dict(color=_C_CURVE, width=2.5), name="θ̂"))
    fig.add_hline(y=0, line=dict(color=_C_ZERO, dash="dot", width=1))
    fig.update_layout(
        template=_TEMPLATE,
        title=dict(text=name, font=dict(size=15, color="#12124a")),
        xaxis_title="cell (t0)", yaxis_title="coefficient",
        height=320, margin=dict(l=10, r=10, t=48, b=10),
        legend=dict(orientation="h", y=-0.25),
    )
    return fig


def render_curves(fits, covariate_names, level: float):
    if fits is None or fits.empty:
        st.warning("No fits found. Run `python cli.py fit` first.")
        return

    cols = theta_columns(fits)
    n_bad = int((~fits["converged"].astype(bool)).sum())
    c1, c2, c3 = st.columns(3)
    c1.metric("Evaluation cells", f"{len(fits):,}")
    c2.metric("Covariates", len(cols))
    c3.metric("Not converged", n_bad)
    if n_bad:
        st.warning(f"{n_bad} fit(s) stopped before the gradient tolerance; treat their bands with care.")

    pairs = st.columns(2)
    for k, col in enumerate(cols):
        m = int(col.split("_")[1])
        name = covariate_names[m - 1] if covariate_names and m <= len(covariate_names) else col
        with pairs[k % 2]:
            st.plotly_chart(curve_figure(fits, m, name, level), use_container_width=True)

    with st.expander("Fit table"):
        st.dataframe(fits.style.format({c: fmt_num for c in fits.columns if c.startswith(("theta_", "se_"))}),
                     use_container_width=True)
