"""Saddle-point iteration and preconditioner certifier."""
