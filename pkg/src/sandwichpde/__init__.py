"""Delay-compensated output-feedback control of ODE-PDE-ODE sandwich systems."""
__version__ = "0.1.0"
