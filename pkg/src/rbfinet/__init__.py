"""Infinity-norm RBF (RBFI) networks with their sensitivity bounds and adversarial attacks."""
