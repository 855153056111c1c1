"""Workbench for active audio-visual separation of dynamic sound sources."""

__version__ = "0.1.0"
