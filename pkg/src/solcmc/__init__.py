"""Numerical CMC spheres, cylinders and Gauss-map tools in the Lie group Sol3."""

__version__ = "0.1.0"
