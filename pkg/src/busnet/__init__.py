"""Breast-ultrasound CNN ensemble harness."""

__version__ = "0.1.0"
