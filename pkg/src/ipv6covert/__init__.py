"""Covert channels in IPv6 header fields and their tree-ensemble detection."""

__version__ = "0.1.0"
