"""Analysis and simulation of a delayed HPA-axis hormone model."""

__version__ = "0.1.0"
