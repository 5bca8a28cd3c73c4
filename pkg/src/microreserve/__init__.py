"""Micro-level claims reserving: environment, agent, benchmarks, harness."""

__version__ = "0.1.0"
