"""Concentrating steady states of anisotropic Keller-Segel problems on planar domains."""

__version__ = "0.1.0"
