"""Dashboard figures build from report tables."""

import numpy as np
import pandas as pd
import plotly.graph_objects as go

from utils.report_charts import (
    comparison_figure,
    ensemble_figure,
    energy_trace_figure,
    heatmap_figure,
    mrsr_figure,
    spectrum_figure,
)


def test_mrsr_figure():
    frame = pd.DataFrame({"j": [1, 2], "guided_xi_r": [0.1, 0.2], "control_xi_r": [0.0, 0.01]})
    fig = mrsr_figure(frame)
    assert isinstance(fig, go.Figure)
    assert len(fig.data) == 2


def test_energy_trace_figure():
    trace = pd.DataFrame({"j": [1, 1, 1, 1], "run": ["guided", "guided", "control", "control"], "t": [2, 1, 2, 1], "energy": [3.0, 2.0, 3.0, 2.9]})
    assert len(energy_trace_figure(trace).data) == 2


def test_heatmap_figure():
    assert isinstance(heatmap_figure(np.eye(4)), go.Figure)


def test_spectrum_figure():
    values = pd.DataFrame({"result": ["top", "bottom", "full", "full"], "index": [0, 0, 0, 1], "sigma": [1.0, 0.25, 1.0, 0.25]})
    assert [t.name for t in spectrum_figure(values).data] == ["top", "bottom", "full"]


def test_comparison_figure():
    summary = pd.DataFrame({"mode": ["jvpg", "energy_dps"], "mean_xi_r": [0.2, 0.1], "mean_log_density": [-3.0, -5.0]})
    assert len(comparison_figure(summary).data) == 2


def test_ensemble_figure():
    summary = pd.DataFrame(
        {"selection": ["random", "srs"], "j": [1, 1], "mean_xi_r": [0.05, 0.2], "mean_control_xi_r": [0.0, 0.01], "count": [3, 3]}
    )
    assert len(ensemble_figure(summary).data) == 4
