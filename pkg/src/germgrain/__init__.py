"""Poisson germ-grain random fields with heavy-tailed grain volumes and their scaling limits."""

__version__ = "0.1.0"
