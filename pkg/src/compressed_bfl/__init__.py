"""Simulator for compressed decentralized Bayesian federated learning."""

__version__ = "0.1.0"
