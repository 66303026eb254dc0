"""Meta-learned, property-conditioned SMILES generation."""

__version__ = "0.1.0"
