"""Spectral simulation and verification toolkit for renormalized singular
SPDEs on the 2-torus: regularized noise families, model lifts, multiscale
reconstruction, renormalized solvers, and a priori bound audits."""

__version__ = "0.1.0"
