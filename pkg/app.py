"""netcox results viewer — main Streamlit entry point.

Reads the artefacts the CLI writes (fits, bandwidth CV, GOF, Monte Carlo
study) from the paths in the run config and charts them.
"""
import json
import os

import pandas as pd
import streamlit as st

from engine.errors import ConfigError
from engine.model import read_panel_json
from engine.settings_store import load_config
from utils.export import build_excel
from views.curves import render_curves
from views.diagnostics import render_diagnostics
from views.docs import render_docs
from views.gof import render_gof

st.set_page_config(
    page_title="netcox",
    layout="wide",
    page_icon="🚲",
    initial_sidebar_state="expanded",
)

_NAVY  = "#1a1a6b"
_BLACK = "#111111"

# ─── GLOBAL CSS ────────────────────────────────────────────────────────────────
_SIDEBAR_BTN = '[data-testid="stSidebar"] [data-testid="baseButton-secondary"]'
_CSS = f"""
<style>
[data-testid="stAppViewContainer"] {{ background: #F7F8FB; }}
.main .block-container {{ padding: 2.5rem 2.5rem 1rem; }}
section[data-testid="stSidebar"] > div:first-child {{ background: #FFFFFF; border-right: 1px solid #E6E8EF; }}
{_SIDEBAR_BTN} {{ background: none !important; border: 0 !important; box-shadow: none !important;
    text-align: left !important; color: #4B5563 !important; font-size: 0.85rem !important; width: 100%; }}
{_SIDEBAR_BTN}:hover {{ background: #EEF0FA !important; color: {_NAVY} !important; }}
.nav-active {{ display: block; background: #E8EAF7; border-left: 3px solid {_NAVY}; color: {_NAVY};
    font-size: 0.85rem; font-weight: 600; padding: 7px 10px; border-radius: 0 6px 6px 0; }}
.nav-section {{ display: block; font-size: 0.64rem; font-weight: 700; color: #9CA3AF;
    letter-spacing: 0.08em; text-transform: uppercase; padding: 12px 10px 4px; }}
</style>
"""
st.markdown(_CSS, unsafe_allow_html=True)


# ─── DATA LOADING ──────────────────────────────────────────────────────────────
def _read_json(path):
    if not os.path.exists(path):
        return None
    with open(path) as f:
        return json.load(f)


@st.cache_data
def load_results(paths: dict):
    fits  = pd.read_csv(paths["fits"]) if os.path.exists(paths["fits"]) else None
    names = read_panel_json(paths["panel"]).covariate_names if os.path.exists(paths["panel"]) else ()
    return fits, list(names), _read_json(paths["cv"]), _read_json(paths["gof"]), _read_json(paths["study"])


try:
    cfg = load_config()
except ConfigError as e:
    st.error(f"Run config is invalid: {e}")
    st.stop()

fits, covariate_names, cv, gof, study = load_results(cfg.paths)

# ─── SIDEBAR ───────────────────────────────────────────────────────────────────
st.sidebar.markdown(
    "<div style='text-align:center;padding:24px 16px 12px'>"
    "<div style='font-size:2rem'>🚲</div>"
    f"<div style='margin-top:8px;font-weight:700;font-size:0.9rem;color:{_BLACK}'>netcox</div>"
    "<div style='font-size:0.68rem;color:#AAAAAA;margin-top:2px'>Time-varying network intensity models</div>"
    "</div>",
    unsafe_allow_html=True,
)
st.sidebar.divider()

if "nav_page" not in st.session_state:
    st.session_state.nav_page = "curves"

_NAV_MAP = {
    "curves":      ("📈", "Coefficient Curves"),
    "gof":         ("🕸️", "Goodness of Fit"),
    "diagnostics": ("🔬", "Diagnostics"),
    "docs":        ("📖", "Documentation"),
}


def _nav_btn(key: str) -> None:
    icon, label = _NAV_MAP[key]
    if st.session_state.nav_page == key:
        st.sidebar.markdown(f"<span class='nav-active'>{icon}&nbsp;&nbsp;{label}</span>",
                            unsafe_allow_html=True)
    elif st.sidebar.button(f"{icon}  {label}", key=f"nb_{key}", use_container_width=True):
        st.session_state.nav_page = key
        st.rerun()


st.sidebar.markdown("<span class='nav-section'>Results</span>", unsafe_allow_html=True)
_nav_btn("curves")
_nav_btn("gof")
_nav_btn("diagnostics")
st.sidebar.markdown("<span class='nav-section'>Reference</span>", unsafe_allow_html=True)
_nav_btn("docs")

_page_key = st.session_state.nav_page
st.sidebar.divider()

level = cfg.level
if _page_key == "curves":
    level = st.sidebar.select_slider("Band level", options=[0.80, 0.90, 0.95, 0.99], value=cfg.level
                                     if cfg.level in (0.80, 0.90, 0.95, 0.99) else 0.99)
    if fits is not None and not fits.empty:
        st.sidebar.header("Export")
        st.sidebar.download_button(
            "Download curves (.xlsx)",
            data=build_excel(fits, level, covariate_names),
            file_name="netcox_curves.xlsx",
            mime="application/vnd.openxmlformats-officedocument.spreadsheetml.sheet",
            use_container_width=True,
        )

st.sidebar.caption(f"Kernel: {cfg.kernel.name} · bandwidth: {cfg.bandwidth}")

# ─── PAGE HEADER ───────────────────────────────────────────────────────────────
_subtitles = {
    "curves":      "Local MLE coefficient curves with pointwise confidence bands",
    "gof":         "Simulated quantile envelopes of regime-subnetwork statistics",
    "diagnostics": "Bandwidth cross-validation and Monte Carlo coverage",
    "docs":        "Model, estimator, bandwidth rule and command reference",
}
icon, title = _NAV_MAP[_page_key]
st.markdown(
    f"<div style='margin-bottom:24px'>"
    f"<h1 style='font-weight:700;font-size:1.6rem;color:{_BLACK};margin:0 0 4px'>{icon}  {title}</h1>"
    f"<p style='font-size:0.84rem;color:#AAAAAA;margin:0'>{_subtitles[_page_key]}</p>"
    f"<div style='height:1px;background:#EBEBEB;margin-top:16px'></div></div>",
    unsafe_allow_html=True,
)

# ─── PAGE ROUTING ──────────────────────────────────────────────────────────────
if _page_key == "curves":
    render_curves(fits, covariate_names, level)
elif _page_key == "gof":
    render_gof(gof)
elif _page_key == "diagnostics":
    render_diagnostics(cv, study)
elif _page_key == "docs":
    render_docs()
