"""
advgen - Streamlit Report Dashboard
Browse attack, compare, ensemble and spectrum report directories.
"""

import sys
from pathlib import Path

import streamlit as st

# Add project root to path
PROJECT_ROOT = Path(__file__).parent
sys.path.insert(0, str(PROJECT_ROOT))

from attack.errors import ReportError
from attack.reporting import load_report
from utils import report_charts
from utils.logger import get_logger
from utils.performance import PerformanceTracker

logger = get_logger("dashboard")


# Page configuration
st.set_page_config(
    page_title="advgen reports",
    page_icon="🎯",
    layout="wide",
    initial_sidebar_state="expanded"
)


def show_attack(report: dict):
    if "summary" in report:
        st.code(report["summary"], language="text")
    col1, col2 = st.columns(2)
    with col1:
        if "mrsr" in report:
            st.plotly_chart(report_charts.mrsr_figure(report["mrsr"]), use_container_width=True)
    with col2:
        if "heatmap" in report:
            st.plotly_chart(report_charts.heatmap_figure(report["heatmap"]), use_container_width=True)
    if "energy_trace" in report and not report["energy_trace"].empty:
        st.plotly_chart(report_charts.energy_trace_figure(report["energy_trace"]), use_container_width=True)
    if "regions" in report:
        st.subheader("Candidate regions")
        st.dataframe(report["regions"])


def show_performance():
    tracker = PerformanceTracker()
    summary = tracker.get_summary()
    col1, col2, col3, col4 = st.columns(4)
    with col1:
        st.metric("Runs", summary["total_operations"])
    with col2:
        st.metric("Success rate", f"{summary['success_rate']:.1f}%")
    with col3:
        st.metric("Mean duration", f"{summary['avg_duration']:.2f}s")
    with col4:
        st.metric("Failures", summary["failures"], delta_color="inverse")


def main():
    """Dashboard entry point."""
    st.title("🎯 advgen report dashboard")
    st.markdown("---")

    out_dir = st.sidebar.text_input("Report directory", value="out/attack")
    try:
        report = load_report(out_dir)
    except ReportError as e:
        st.warning(str(e))
        show_performance()
        return

    tabs = st.tabs(["Attack", "Comparison", "Ensemble", "Spectrum", "Performance"])
    with tabs[0]:
        show_attack(report)
    with tabs[1]:
        if "compare_summary" in report:
            st.plotly_chart(report_charts.comparison_figure(report["compare_summary"]), use_container_width=True)
            st.dataframe(report["compare"])
        else:
            st.info("No comparison tables in this directory.")
    with tabs[2]:
        if "ensemble_summary" in report:
            st.plotly_chart(report_charts.ensemble_figure(report["ensemble_summary"]), use_container_width=True)
            st.dataframe(report["ensemble_summary"])
        else:
            st.info("No ensemble tables in this directory.")
    with tabs[3]:
        if "singular_values" in report:
            st.plotly_chart(report_charts.spectrum_figure(report["singular_values"]), use_container_width=True)
        if "injection_summary" in report:
            st.dataframe(report["injection_summary"])
    with tabs[4]:
        show_performance()


if __name__ == "__main__":
    main()
