"""Factor-based deep RL portfolio construction with conditional-autoencoder states."""

__version__ = "0.1.0"
