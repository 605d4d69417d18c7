"""Desk-scale masked discrete diffusion language modeling."""

__version__ = "0.1.0"
