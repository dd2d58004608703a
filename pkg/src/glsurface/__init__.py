"""Lattice laboratory for the reduced 2D Ginzburg-Landau energy of type-I superconductors."""
__version__ = "0.1.0"
