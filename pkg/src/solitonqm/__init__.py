"""Stochastic soliton representation of quantum mechanics: numerical toolkit."""
__version__ = "0.1.0"
