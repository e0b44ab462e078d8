"""Streamlit dashboard; run with `streamlit run ui/app.py`."""
