"""Hierarchical behaviour-space RL: controllers over combinations of reward channels."""

__version__ = "0.1.0"
