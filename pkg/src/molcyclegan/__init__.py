"""Latent-space CycleGAN for molecular property optimization."""
__version__ = "0.1.0"
