"""Hybrid quantum-classical physics-informed networks for 2D TEz Maxwell."""

__version__ = "0.1.0"
