"""Multi-agent reinforcement learning for Earth-observation satellite constellations."""

__version__ = "0.1.0"
