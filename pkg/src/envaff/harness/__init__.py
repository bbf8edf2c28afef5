"""Metrics, evaluation protocol, configuration and command line."""
