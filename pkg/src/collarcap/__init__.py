"""Area-preserving maps on closed surfaces built from a hyperbolic toral
automorphism by blowing up its fixed points and capping the collars with
integrable dynamics."""

__version__ = "0.1.0"
