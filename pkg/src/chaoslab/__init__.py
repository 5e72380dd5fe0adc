"""Particle systems with multiplicative noise, their mean-field limit, and
numerical checks of propagation of chaos."""

__version__ = "0.1.0"
