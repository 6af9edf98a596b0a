"""Nonlinear RLC transmission-line model of actin filaments and pulse-based logic gates."""

__version__ = "0.1.0"
