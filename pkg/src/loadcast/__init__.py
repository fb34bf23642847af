"""Day-ahead hourly appliance-level load forecasting.

Three steps: rank channels by weighted permutation entropy, assemble
feature groups, and fit multistep forecasters scored against a
seasonal-naive baseline.
"""

__version__ = "0.1.0"
