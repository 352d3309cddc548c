"""Modified Fredholm determinants of Schrodinger operators, their zeros and trace formulas."""

__version__ = "0.1.0"
