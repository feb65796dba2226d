"""Highway + RF/THz network co-simulation with multi-objective deep Q-learning."""

__version__ = "0.1.0"
