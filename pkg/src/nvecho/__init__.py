"""Spin-ensemble microwave memory simulator for NV centers coupled to a resonator."""

__version__ = "0.1.0"
