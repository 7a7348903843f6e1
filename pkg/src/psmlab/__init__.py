"""Propensity score matching laboratory."""
