"""Desk-scale lab for function folding, profile-guided layout and ELF cost models."""

__version__ = "0.1.0"
