"""Documentation page: model, estimator, bandwidth rule, GOF and usage guide."""
import numpy as np
import pandas as pd
import plotly.graph_objects as go
import streamlit as st

from engine.kernels import equivalent_local_linear, kernel_eval, kernel_from_name

_TMPL = "plotly_white"


def _kernel_shape_fig():
    """Triangular kernel, its one-sided version and the one-sided local-linear equivalent."""
    u   = np.linspace(-1.05, 1.05, 421)
    tri = kernel_from_name("triangular")
    one = kernel_from_name("triangular+one_sided")
    fig = go.Figure()
    fig.add_trace(go.Scatter(x=u, y=kernel_eval(tri, u), name="K (triangular)",
                             line=dict(width=2.5, color="#1a1a6b")))
    fig.add_trace(go.Scatter(x=u, y=kernel_eval(one, u), name="K* (one-sided)",
                             line=dict(width=2.5, color="#F47920")))
    fig.add_trace(go.Scatter(x=u, y=kernel_eval(equivalent_local_linear(one), u),
                             name="L (one-sided local-linear equivalent)",
                             line=dict(width=2.5, color="#10B981", dash="dash")))
    fig.add_hline(y=0, line=dict(color="#94a3b8", dash="dot", width=1))
    fig.update_layout(
        template=_TMPL, height=300, title="Kernels on u = (t − t0) / h",
        xaxis_title="u", yaxis_title="weight",
        legend=dict(orientation="h", yanchor="bottom", y=1.02, xanchor="right", x=1),
        margin=dict(l=0, r=0, t=50, b=0),
    )
    return fig


def render_docs():
    tab1, tab2, tab3, tab4 = st.tabs([
        "🏗️ Architecture",
        "📐 Models & Formulas",
        "⚙️ Assumptions",
        "🚀 How to Use",
    ])

    # ─────────────────────────────────────────────────────────────────────────────
    # TAB 1: ARCHITECTURE
    # ─────────────────────────────────────────────────────────────────────────────
    with tab1:
        st.markdown("## Architecture")
        st.markdown(
            "**netcox** fits time-varying Cox-type intensity models to timestamped pair "
            "interactions (e.g. bike tours between stations). The log-intensity of an edge is "
            "linear in its covariates with coefficients that drift smoothly in time; the drift is "
            "recovered by kernel-localised maximum likelihood."
        )
        st.markdown("### Data Flow")
        st.code(
            """trips.csv  (start/end time, start/end station)
        │   cli.py ingest        reject malformed, multi-day and round trips
        ▼
events.csv + stations.csv + rejects.csv
        │   cli.py features      weekly anchor-day counts, lagged covariates, censoring
        ▼
panel.json  (cell × pair records: covariates, count, exposure)
        │   cli.py bandwidth     one-sided CV, transfer to the two-sided kernel
        │   cli.py fit           local MLE per evaluation cell + covariance
        ▼
fits.csv  (t0, θ̂, se)
        │   cli.py gof           simulate the fitted model, regime-subnetwork statistics
        ▼
gof.json · bandwidth.json · study.json   →   this viewer""",
            language="text",
        )

    # ─────────────────────────────────────────────────────────────────────────────
    # TAB 2: MODELS & FORMULAS
    # ─────────────────────────────────────────────────────────────────────────────
    with tab2:
        st.markdown("### 1. Intensity")
        st.code(
            """λ_ij(t) = C_ij(t) · exp(θ(t)ᵀ X_ij(t))

C_ij(t) ∈ {0, 1}   at-risk indicator (censoring)
X_ij(t) ∈ R^q      predictable covariates
θ(t)               smooth coefficient curve""",
            language="text",
        )

        st.markdown("### 2. Local likelihood at t0")
        st.info("**Goal:** estimate θ(t0) from events near t0, weighted by a kernel of bandwidth h.")
        st.code(
            """ℓ(θ) = (1/h) [ Σ_events K((t−t0)/h) θᵀX  −  Σ_pairs ∫ K((s−t0)/h) C exp(θᵀX) ds ]

score     U(θ) = (1/h) [ Σ K·X  −  ∫ K·C·exp(θᵀX)·X ]
curvature H(θ) = −(1/h) ∫ K·C·exp(θᵀX)·X Xᵀ

Maximised by damped Newton inside the box [−20, 20]^q.""",
            language="text",
        )

        st.markdown("### 3. Confidence bands")
        st.code(
            """Σ̂   = −H(θ̂) / n              (n = active pairs at t0)
Cov = ∫K² · Σ̂⁻¹ / (n·h)
band: θ̂_m ± z_{(1+L)/2} · sqrt(Cov_mm)""",
            language="text",
        )

        st.markdown("### 4. Bandwidth selection")
        st.markdown(
            "Two-sided fits cannot be scored on held-out future events, so bandwidths are "
            "cross-validated with a one-sided (past-only) local-linear fit and then transferred."
        )
        st.plotly_chart(_kernel_shape_fig(), use_container_width=True)
        st.code(
            """err(h) = mean over scored cells of
         Σ_pairs (N − Λ̂)² / Λ̂        Λ̂ = exp(μ̂0ᵀX)·exposure

h_L = argmin err(h)     (ties → smallest h)
h_K = max(1, round(h_L · f)),   f = (R(K)·μ2(L)² / (R(L)·μ2(K)²))^(1/5)""",
            language="text",
        )

        st.markdown("### 5. Goodness of fit")
        regimes = pd.DataFrame({
            "Regime": ["1-3", "2-4", "3-5", "4-6", "5-12", "10-inf"],
            "Edges kept": [
                "pairs with 1 to 3 tours", "2 to 4 tours", "3 to 5 tours",
                "4 to 6 tours", "5 to 12 tours", "10 or more tours",
            ],
        })
        st.dataframe(regimes, use_container_width=True, hide_index=True)
        st.markdown(
            "For each regime the fitted model is simulated many times at the target cell; the "
            "degree distribution, clustering coefficient and diameter of every simulated regime "
            "subnetwork give quantile envelopes the observed statistics are compared against."
        )

    # ─────────────────────────────────────────────────────────────────────────────
    # TAB 3: ASSUMPTIONS
    # ─────────────────────────────────────────────────────────────────────────────
    with tab3:
        st.markdown("### Assumptions")
        st.markdown(
            "- Pairs are exchangeable given covariates: the intensity depends on a pair only "
            "through `X_ij` and `C_ij`.\n"
            "- Covariates are predictable: the weekly features at week k use weeks k−1 and k−2 only.\n"
            "- θ(t) is smooth on the scale of the bandwidth; near the ends of the observation "
            "window the kernel is truncated and the fit is flagged as a boundary fit.\n"
            "- Pairs are censored out of week k when they made no tour in the lookback window.\n"
            "- An unbounded maximiser (e.g. a covariate that never fires) is reported as an error "
            "with the escaping direction rather than silently clipped to the box."
        )

    # ─────────────────────────────────────────────────────────────────────────────
    # TAB 4: HOW TO USE
    # ─────────────────────────────────────────────────────────────────────────────
    with tab4:
        st.markdown("### Quick start")
        st.code(
            """python generate_data.py               # synthetic data/trips.csv
python cli.py ingest
python cli.py features
python cli.py bandwidth --candidates 1..12
python cli.py fit --bandwidth 6
python cli.py gof --n-sims 200
python cli.py mc-validate --n-reps 100
streamlit run app.py""",
            language="bash",
        )
        st.markdown(
            "Options default to `netcox.json` next to the code; an unknown key in that file "
            "is an error naming the dotted path. Set `NETCOX_THREADS` to cap the worker pools."
        )
