"""Simulation of continuously monitored collisional models."""

__version__ = "0.1.0"
