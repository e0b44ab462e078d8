# ui/app.py
# coding: utf-8
import streamlit as st
import sys
import os
import tempfile

import numpy as np

# Add the parent directory to Python's path so we can import 'core'
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from core.choice import beta, gamma
from core.ctmc import InitSpec, simulate_path
from core.diffusion import LimitSystemSpec, simulate_limit
from core.fixed_point import classify_regime, mu_sequence
from core.fluid import integrate_reflected
from core.paths import uniform_grid, write_long_csv
from core.rules import ParameterRule
from utils.config import RULE_PRESETS
import logging

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')

st.set_page_config(
    page_title="JSQ(d) Explorer",
    page_icon="📈",
    layout="wide",
    initial_sidebar_state="expanded"
)

st.markdown("""
<style>
    .main-header {
        font-size: 2.5rem;
        color: #1E88E5;
        margin-bottom: 0.5rem;
    }
    .subheader {
        font-size: 1.2rem;
        color: #424242;
        margin-bottom: 2rem;
    }
    .info-box {
        background-color: #e8f4f8;
        border-radius: 5px;
        padding: 15px;
        margin-bottom: 15px;
        width: 100%;
        display: inline-block;
    }
    .stButton {
        width: 100%;
    }
</style>
""", unsafe_allow_html=True)

st.markdown('<h1 class="main-header">JSQ(d) Explorer</h1>', unsafe_allow_html=True)
st.markdown('<p class="subheader">Choice probabilities, near fixed points, fluid and diffusion limits, '
            'and exact prelimit paths of the power-of-d supermarket model.</p>', unsafe_allow_html=True)

if 'results' not in st.session_state:
    st.session_state.results = {}


def csv_bytes(paths):
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "paths.csv")
        write_long_csv(path, paths)
        with open(path) as f:
            return f.read()


def path_frame(path, label):
    return {f"{label}{c}": path.values[row] for row, c in enumerate(path.coords)}


with st.sidebar:
    st.header("System")
    n = st.number_input("n (servers)", min_value=1, value=1000, step=100)
    source = st.radio("Parameters", ["Constant", "Preset rule"])
    if source == "Constant":
        d = st.number_input("d (choices)", min_value=1, max_value=int(n), value=min(30, int(n)))
        lam = st.number_input("lambda (load)", min_value=0.0, max_value=0.999999, value=0.9, format="%.6f")
        rule = ParameterRule.constant(int(d), float(lam))
    else:
        preset = st.selectbox("Preset", sorted(RULE_PRESETS))
        rule = ParameterRule.preset(preset)
        st.caption(f"d = {rule.d_expr}, lambda = {rule.lam_expr}")

    st.header("Run")
    t_end = st.number_input("Horizon T", min_value=0.1, value=2.0)
    grid_dt = st.number_input("Grid step", min_value=0.001, value=0.01, format="%.3f")
    replicates = st.number_input("Replicates", min_value=1, max_value=500, value=20)
    seed = st.number_input("Seed", min_value=0, value=1)
    coords = st.number_input("Tracked coordinates", min_value=2, max_value=20, value=4)

try:
    params = rule.params_at(int(n))
    regime = classify_regime(rule, int(n))
except ValueError as e:
    st.error(f"Invalid parameters: {str(e)}")
    st.stop()

st.markdown('<div class="info-box">', unsafe_allow_html=True)
col1, col2, col3 = st.columns(3)
col1.metric("d", params.d)
col2.metric("lambda", f"{params.lam:.6g}")
col3.metric("Regime", regime.describe())
st.markdown('</div>', unsafe_allow_html=True)

tab1, tab2, tab3, tab4 = st.tabs(["Choice probability", "Near fixed point", "Fluid vs prelimit", "Limit diffusion"])

with tab1:
    xs = np.linspace(0.0, 1.0, 401)
    st.line_chart({"beta_n": [beta(params, x) for x in xs], "x^d": [gamma(params, x) for x in xs]})

with tab2:
    if 0.0 < params.lam < 1.0:
        mu = mu_sequence(params)
        st.bar_chart({"mu_n": list(mu.mu)})
        with st.expander("Regime diagnostics", expanded=False):
            st.json(regime.diagnostics)
    else:
        st.info("The near fixed point needs 0 < lambda < 1.")

with tab3:
    if st.button("▶ Simulate", use_container_width=True):
        with st.spinner("Running prelimit replicates..."):
            grid = uniform_grid(t_end, grid_dt)
            init = InitSpec.parse("empty")
            paths = [simulate_path(params, init, t_end, grid, int(seed), int(coords), rep)[0]
                     for rep in range(int(replicates))]
            fluid = integrate_reflected(params.lam, np.zeros(int(coords)), t_end, min(grid_dt, 1e-3), int(coords))
            st.session_state.results["prelimit"] = paths
            st.session_state.results["fluid"] = fluid
    if "prelimit" in st.session_state.results:
        paths = st.session_state.results["prelimit"]
        fluid = st.session_state.results["fluid"]
        mean = np.mean([p.values for p in paths], axis=0)
        st.line_chart({f"G{i + 1}": mean[i] for i in range(mean.shape[0])})
        st.line_chart(path_frame(fluid.g, "g"))
        st.download_button(
            label="Download paths",
            data=csv_bytes(paths),
            file_name="prelimit_paths.csv",
            mime="text/csv"
        )

with tab4:
    if regime.kind == "ambiguous":
        st.warning("The regime is ambiguous at this n; no limit system is attached.")
    elif st.button("▶ Simulate limit", use_container_width=True):
        with st.spinner("Stepping the limit diffusion..."):
            r = max(3, (regime.k or 1) + 1)
            spec = LimitSystemSpec.from_regime(regime, r)
            result = simulate_limit(spec, t_end, 1e-3, int(seed), int(replicates), uniform_grid(t_end, grid_dt))
            st.session_state.results["limit"] = result
    if "limit" in st.session_state.results:
        result = st.session_state.results["limit"]
        first = result.path(0)
        st.line_chart(path_frame(first, "Z"))
        if result.clip_events:
            st.warning(f"Exponential drift clipped on {result.clip_rate:.3%} of steps")

st.markdown("---")
st.markdown("**JSQ(d) Explorer** | Made with Streamlit")
