"""Delay-Doppler channel prediction for OTFS links: simulation, models and experiments."""

__version__ = "0.1.0"
