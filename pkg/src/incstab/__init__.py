"""Certification and simulation of incremental stability for bimodal switched systems."""
__version__ = "0.1.0"
