"""Finite-element simulation of stochastic reaction-diffusion systems driven
by spatially coloured Q-Wiener noise."""
__version__ = "0.1.0"
