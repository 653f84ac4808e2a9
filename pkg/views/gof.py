"""Goodness-of-fit: simulated quantile bands vs observed regime subnetworks."""
import numpy as np
import plotly.graph_objects as go
import streamlit as st

_C_OBS    = "#dc2626"
_C_BAND   = "#1a1a6b"
_TEMPLATE = "plotly_white"


def degree_figure(regime: str, stats: dict, quantiles) -> go.Figure:
    rows = stats["degree_bands"]
    deg  = [r["degree"] for r in rows]
    fig  = go.Figure()
    for q in quantiles:
        key = f"q{round(q * 100):02d}"
        fig.add_trace(go.Scatter(
            x=deg, y=[r[key] for r in rows], mode="lines",
            line=dict(color=_C_BAND, dash="dot", width=1.5), name=f"{q:.0%} quantile"))
    fig.add_trace(go.Scatter(
        x=deg, y=[r["observed"] for r in rows], mode="lines+markers",
        line=dict(color=_C_OBS, width=2.5), name="observed"))
    fig.update_layout(
        template=_TEMPLATE, title=f"Degree distribution — tours {regime}",
        xaxis_title="degree", yaxis_title="nodes", height=320,
        margin=dict(l=10, r=10, t=48, b=10), legend=dict(orientation="h", y=-0.25))
    return fig


def histogram_figure(title: str, edges, hist, observed) -> go.Figure:
    centers = 0.5 * (np.asarray(edges[:-1]) + np.asarray(edges[1:]))
    fig = go.Figure(go.Bar(x=centers, y=hist, marker_color=_C_BAND, name="simulated"))
    fig.add_vline(x=observed, line=dict(color=_C_OBS, width=2.5), annotation_text="observed")
    fig.update_layout(template=_TEMPLATE, title=title, height=280, margin=dict(l=10, r=10, t=48, b=10))
    return fig


def render_gof(report: dict | None):
    if not report:
        st.warning("No GOF report found. Run `python cli.py gof` first.")
        return

    st.caption(f"Cell {report['cell']} · {report['n_sims']:,} simulated networks · "
               f"quantiles {', '.join(f'{q:.0%}' for q in report['quantiles'])}")
    regime = st.selectbox("Frequency regime (tours)", list(report["regimes"]))
    stats  = report["regimes"][regime]

    st.plotly_chart(degree_figure(regime, stats, report["quantiles"]), use_container_width=True)

    c1, c2 = st.columns(2)
    with c1:
        clus = stats["clustering"]
        st.plotly_chart(histogram_figure("Clustering coefficient", clus["bin_edges"], clus["hist"],
                                         clus["observed"]), use_container_width=True)
    with c2:
        diam  = stats["diameter"]
        edges = np.arange(len(diam["hist"]) + 1) - 0.5
        st.plotly_chart(histogram_figure("Diameter (largest component)", edges, diam["hist"],
                                         diam["observed"]), use_container_width=True)
        st.caption(f"Disconnected in {diam['disconnected_fraction']:.0%} of simulations"
                   f"{' and in the observed network' if diam['observed_disconnected'] else ''}.")
