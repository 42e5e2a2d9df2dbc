"""Benchmark harness for forecasting PHQ-4 severity from passive smartphone sensing."""

__version__ = "0.1.0"
