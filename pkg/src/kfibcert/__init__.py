"""Certified arithmetic for (F_{m+1})^x - (F_{m-1})^x = F_n over k-generalized Fibonacci numbers."""

__version__ = "0.1.0"
