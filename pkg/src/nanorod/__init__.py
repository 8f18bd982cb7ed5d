"""Boundary-integral solver and thin-rod asymptotics for 2D scattering."""

__version__ = "0.1.0"
