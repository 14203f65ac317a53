"""Orbit counting for Kleinian sphere packings and checks of the supporting Lie theory."""

__version__ = "0.1.0"
