"""Derivative-free Lyapunov exponents of continuous planar maps via dynamical balls."""

__version__ = "0.1.0"
