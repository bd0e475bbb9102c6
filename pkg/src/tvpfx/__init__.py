"""Exchange-rate forecasting with time-varying-parameter Taylor-rule fundamentals."""

__version__ = "0.1.0"
