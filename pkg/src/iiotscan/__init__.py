"""Auditing (D)TLS deployments of industrial IoT protocols."""

__version__ = "0.1.0"
