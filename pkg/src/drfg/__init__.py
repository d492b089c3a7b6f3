"""Deep reproductive feature generation for chest X-ray classification.

Two feature stages: quadrant-sliced pre-trained backbones pooled into one
long vector, then an autoencoder whose bottleneck feeds shallow classifiers.
"""

__version__ = "0.1.0"
