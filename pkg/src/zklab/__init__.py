"""Pseudospectral lab for the generalized Zakharov-Kuznetsov equation on a cylinder."""

__version__ = "0.1.0"
