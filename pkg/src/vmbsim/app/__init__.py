"""Solver loop, diagnostics, experiments and command-line interface."""
