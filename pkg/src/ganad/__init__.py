"""GAN-based anomaly detection (AnoGAN, EGBAD, GANomaly) on a small autodiff core."""

__version__ = "0.1.0"
