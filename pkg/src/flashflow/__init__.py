"""Fourier-guided latent-shifting flow matching for image-to-video, at desk scale."""

__version__ = "0.1.0"
