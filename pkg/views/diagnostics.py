"""Bandwidth CV curve and Monte Carlo study summary."""
import pandas as pd
import plotly.graph_objects as go
import streamlit as st

from utils.fmt import color_coverage, fmt_num, fmt_pct

_C_LINE   = "#1a1a6b"
_C_PICK   = "#dc2626"
_TEMPLATE = "plotly_white"


def cv_figure(cv: dict) -> go.Figure:
    df  = pd.DataFrame(cv["errors"]).sort_values("h")
    fig = go.Figure(go.Scatter(x=df["h"], y=df["err"], mode="lines+markers",
                               line=dict(color=_C_LINE, width=2.5), name="CV error"))
    fig.add_vline(x=cv["h_l"], line=dict(color=_C_PICK, dash="dot"), annotation_text=f"h_L = {cv['h_l']}")
    fig.add_vline(x=cv["h_k"], line=dict(color=_C_PICK), annotation_text=f"h_K = {cv['h_k']}")
    fig.update_layout(template=_TEMPLATE, title="One-sided CV prediction error",
                      xaxis_title="bandwidth (cells)", yaxis_title="error", height=360,
                      margin=dict(l=10, r=10, t=48, b=10))
    return fig


def render_diagnostics(cv: dict | None, study: dict | None):
    tab1, tab2 = st.tabs(["📐 Bandwidth", "🎲 Monte Carlo study"])

    with tab1:
        if not cv:
            st.warning("No bandwidth result found. Run `python cli.py bandwidth` first.")
        else:
            c1, c2, c3 = st.columns(3)
            c1.metric("h_L (one-sided)", cv["h_l"])
            c2.metric("Transfer factor", fmt_num(cv["factor"]))
            c3.metric("h_K (target)", cv["h_k"])
            st.plotly_chart(cv_figure(cv), use_container_width=True)
            if cv.get("failed"):
                st.warning(f"{len(cv['failed'])} candidate(s) could not be scored.")

    with tab2:
        if not study:
            st.warning("No study report found. Run `python cli.py mc-validate` first.")
            return
        c1, c2 = st.columns(2)
        c1.metric("Replicates", f"{study['n_reps']:,}")
        c2.metric("Excluded", fmt_pct(study["excluded_fraction"]))
        table = pd.DataFrame(study["coordinates"]).set_index("coordinate")
        cov_cols = [c for c in table.columns if c.startswith("coverage_")]
        st.dataframe(table.style.map(color_coverage, subset=["coverage_95"]).format(
            {**{c: fmt_pct for c in cov_cols}, "mean_z": fmt_num, "var_z": fmt_num,
             "ad_stat": fmt_num, "rmse": fmt_num}), use_container_width=True)
        st.caption("Nominal coverage of 0.95 should land within [0.90, 0.98]; "
                   "an Anderson–Darling statistic below 0.75 is consistent with normality at 5%.")
