"""Spectral simulation of transport and 2D Euler dynamics on the torus driven
by Marcus-type jump noise, with scaling-limit experiments measuring the
emergent eddy viscosity."""

__version__ = "0.1.0"
