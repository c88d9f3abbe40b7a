"""Lattice domain-wall fermions on U(1) tori: spectral flow as a lattice APS index."""

__version__ = "0.1.0"
