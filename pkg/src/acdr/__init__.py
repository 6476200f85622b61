"""Demand-response scheduling for fixed-speed air-conditioner clusters."""

__version__ = "0.1.0"
