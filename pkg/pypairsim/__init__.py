"""Photon-pair source simulation and coincidence analysis."""
__version__ = "0.1.0"
