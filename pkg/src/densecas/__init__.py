"""Collision avoidance policies for dense unmanned airspace."""

__version__ = "0.1.0"
