"""Random walks driven by a Poisson cloud of independent random walks."""

__version__ = "0.1.0"
