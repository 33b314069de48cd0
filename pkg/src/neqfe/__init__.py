"""Nonequilibrium free-energy estimation: Jarzynski, importance sampling and reference quadrature."""
__version__ = "0.1.0"
