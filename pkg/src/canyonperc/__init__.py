"""Percolation of relay-augmented D2D networks on Poisson-Voronoi streets under canyon shadowing."""

__version__ = "0.1.0"
