"""Simulation and analysis toolkit for loss-controlled QKD over amplified fiber."""
__version__ = "0.1.0"
