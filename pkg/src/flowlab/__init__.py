"""Fund flows, price impact and self-inflated returns on daily fund panels."""

__version__ = "0.1.0"
