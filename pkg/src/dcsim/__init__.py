"""Deterministic simulator for prediction-triggered dual-connectivity
handover in ultra-dense cellular networks."""

from . import config, dualconn, harness, lstm, mobility, predictor, radio, streams

__all__ = ["config", "dualconn", "harness", "lstm", "mobility",
           "predictor", "radio", "streams"]
__version__ = "0.1.0"
