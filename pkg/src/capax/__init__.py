"""Inner capacities, equilibrium measures and balayage on discrete models."""

__version__ = "0.1.0"
