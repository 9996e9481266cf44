"""Transactional-interpretation simulator: state vectors, absorbers, transactions."""

__version__ = "0.1.0"
