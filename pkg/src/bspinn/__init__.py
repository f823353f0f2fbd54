"""Mesh-free Black-Scholes pricing: anchored-ensemble PINN surrogates
verified against closed-form and finite-difference oracles."""

__version__ = "0.1.0"
