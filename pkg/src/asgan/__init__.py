"""Adversarial-symmetric GAN training on desk-scale problems."""

__version__ = "0.1.0"
