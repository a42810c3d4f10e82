"""Deterministic multi-article UAV delivery simulator and mission planner."""

__version__ = "0.1.0"
