"""
Report Charts
Plotly figure builders for the dashboard; each takes a report table and
returns a Figure, so they are usable (and testable) without streamlit.
"""

import numpy as np
import pandas as pd
import plotly.graph_objects as go

CHART_TEMPLATE = "plotly_white"


def _layout(fig: go.Figure, title: str, x_title: str, y_title: str) -> go.Figure:
    fig.update_layout(title=title, xaxis_title=x_title, yaxis_title=y_title, template=CHART_TEMPLATE)
    return fig


def mrsr_figure(mrsr: pd.DataFrame) -> go.Figure:
    """ξ_r against region count for the guided run and the γ = 0 control"""
    fig = go.Figure()
    fig.add_trace(go.Scatter(x=mrsr["j"], y=mrsr["guided_xi_r"], mode="lines+markers", name="guided"))
    fig.add_trace(go.Scatter(x=mrsr["j"], y=mrsr["control_xi_r"], mode="lines+markers", name="control (γ = 0)"))
    return _layout(fig, "Mean relative shift ratio", "regions", "ξ_r")


def energy_trace_figure(trace: pd.DataFrame) -> go.Figure:
    """Adversarial energy per step, one line per (region count, run)"""
    fig = go.Figure()
    for (j, run), part in trace.groupby(["j", "run"], sort=True):
        fig.add_trace(go.Scatter(x=part["t"], y=part["energy"], mode="lines", name=f"j={j} {run}"))
    fig.update_xaxes(autorange="reversed")
    return _layout(fig, "Energy along the trajectory", "t", "L_adv(z_0|t)")


def heatmap_figure(heat: np.ndarray) -> go.Figure:
    fig = go.Figure(go.Heatmap(z=np.asarray(heat), colorscale="Viridis"))
    fig.update_yaxes(autorange="reversed")
    return _layout(fig, "Saliency", "column", "row")


def spectrum_figure(singular_values: pd.DataFrame) -> go.Figure:
    """Singular values per result (full SVD as a curve, extremal pairs as markers)"""
    fig = go.Figure()
    for name, part in singular_values.groupby("result", sort=False):
        mode = "lines+markers" if len(part) > 1 else "markers"
        fig.add_trace(go.Scatter(x=part["index"], y=part["sigma"], mode=mode, name=str(name)))
    fig.update_yaxes(type="log")
    return _layout(fig, "Score Jacobian spectrum", "index", "σ")


def comparison_figure(summary: pd.DataFrame) -> go.Figure:
    """Mean ξ_r and mean terminal log-density per guidance mode"""
    fig = go.Figure()
    fig.add_trace(go.Bar(x=summary["mode"], y=summary["mean_xi_r"], name="mean ξ_r"))
    fig.add_trace(go.Scatter(x=summary["mode"], y=summary["mean_log_density"], name="mean log-density", yaxis="y2", mode="markers"))
    fig.update_layout(yaxis2=dict(overlaying="y", side="right", title="log p(z)"))
    return _layout(fig, "Guidance comparison", "mode", "ξ_r")


def ensemble_figure(summary: pd.DataFrame) -> go.Figure:
    """Mean ξ_r per region count for each selection strategy, plus the control"""
    fig = go.Figure()
    for sel, part in summary.groupby("selection", sort=True):
        fig.add_trace(go.Scatter(x=part["j"], y=part["mean_xi_r"], mode="lines+markers", name=str(sel)))
        fig.add_trace(
            go.Scatter(x=part["j"], y=part["mean_control_xi_r"], mode="lines", line=dict(dash="dot"), name=f"{sel} control")
        )
    return _layout(fig, "Ensemble ξ_r by region count", "regions", "mean ξ_r")
