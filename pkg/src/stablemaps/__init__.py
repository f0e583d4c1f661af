"""Critical Boltzmann bipartite maps via labelled Galton-Watson trees."""

__version__ = "0.1.0"
