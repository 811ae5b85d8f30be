"""Cellular-automaton world observed by communicating predictive agents, with
information-theoretic and topological analysis of the collective."""

__version__ = "0.1.0"
