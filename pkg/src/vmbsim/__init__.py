"""Deterministic 1D3V Vlasov-Maxwell-Boltzmann simulator with invariant checks."""

__version__ = "0.1.0"
