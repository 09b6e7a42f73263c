"""Catalog Petri nets: modelling, execution, explicit verification and MCMT export."""

__version__ = "0.1.0"
