"""
latentknn - Variance-similarity nearest-neighbor matrix and tensor completion

Estimates missing entries of matrices and tensors generated by a latent
variable model, generates synthetic instances of that model, and evaluates
both error metrics and theoretical MSE bounds.
"""

__version__ = "1.0.0"
__author__ = "latentknn developers"
