"""Buy-hold-sell Monte Carlo simulation and macro-driver econometrics."""

__version__ = "0.1.0"
