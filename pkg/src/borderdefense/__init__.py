"""Border-defense pursuit-evasion with equilibrium-assisted multi-agent RL."""

__version__ = "0.1.0"
