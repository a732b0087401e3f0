"""Loss-cost modeling toolkit for insurance portfolios."""

__version__ = "0.1.0"
