"""Workplace contact networks from error-prone diary reports, and epidemics on them."""

__version__ = "0.1.0"
