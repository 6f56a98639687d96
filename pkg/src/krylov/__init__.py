"""Krylov-space toolkit: Lanczos-type engines, recursion methods, chain dynamics and models."""

__version__ = "0.1.0"
