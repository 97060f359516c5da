"""Sampling long runs of a random walk conditioned on a large deviation of its mean."""
