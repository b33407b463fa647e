"""Exact and Monte Carlo tools for low-degree hardness and tensor-network estimation in spiked order-k tensor decomposition."""

__version__ = "0.1.0"
