"""Clustering of two-vehicle driving encounters."""
