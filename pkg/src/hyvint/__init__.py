"""Intensity-driven hypergraph generation with Gamma variational inference and latent diffusion."""
__version__ = "0.1.0"
