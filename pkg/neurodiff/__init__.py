"""Neural differential distinguishers for round-reduced PRESENT and Simeck"""

__version__ = '1.0.0'
