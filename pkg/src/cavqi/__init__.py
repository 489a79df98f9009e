"""Simulation toolkit for a spatially multiplexed cavity-enhanced atomic memory.

Modules: mode_array (cavity mode bookkeeping and ray tracing), memory_model
(closed-form rates), trial_engine (Monte Carlo), estimators, fitting, and the
config/scenario/CLI layer.
"""

__version__ = "0.1.0"
