"""Discrete element simulation of cohesive metal powders and angle-of-repose analysis."""
