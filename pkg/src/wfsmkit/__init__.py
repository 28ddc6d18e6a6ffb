"""Design-optimisation toolkit for wound-field synchronous traction machines."""

__version__ = "0.1.0"
