"""Sup-convolution envelopes of the squared Wasserstein distance on particle clouds"""

__version__ = "0.1.0"
