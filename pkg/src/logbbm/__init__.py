"""Logistic branching Brownian motion: particle simulation, FKPP solvers and studies."""

__version__ = "0.1.0"
