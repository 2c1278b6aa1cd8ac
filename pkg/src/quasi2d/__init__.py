"""Numerical checks for quasi-two-dimensional solutions of the 3D Navier-Stokes equations."""

__version__ = "0.1.0"
