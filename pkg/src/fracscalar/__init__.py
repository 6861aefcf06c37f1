"""Ground states of a fractional scalar field equation with competing powers."""

__version__ = "0.1.0"
