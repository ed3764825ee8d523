"""Dual-conditional generative balancing for network intrusion detection data.

A conditional VAE with class-conditional batch normalization synthesizes
minority-class traffic records; the package also ships the NSL-KDD encoding
pipeline, five oversampling baselines, a CART classifier, weighted detection
metrics and a parameter/FLOP counter, all behind one seeded CLI.
"""

__version__ = "0.1.0"

from .model import C2BNVAE, Checkpoint, ModelConfig, generate, train  # noqa: F401
from .nslkdd import EncodedDataset, EncodingSchema  # noqa: F401
