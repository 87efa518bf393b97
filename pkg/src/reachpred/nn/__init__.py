"""Minimal neural-network building blocks (numpy, float64, explicit gradients)."""
