"""Gaussian smoothing of semantic tag likelihoods.

The semantic vector ``S`` holds one likelihood per tag. Smoothing spreads each
tag's mass onto its index neighbours with a truncated, renormalised Gaussian,
so the tag ordering in the dataset defines the neighbourhood. Output length
always equals input length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from gssfcap.errors import DomainError, ValidationError

DEFAULT_SIGMA = 1.0


def default_radius(sigma: float) -> int:
    """``ceil(3 * sigma)``, never below 1."""
    return max(1, math.ceil(3.0 * sigma))


def gaussian_kernel(sigma: float, radius: int | None = None) -> np.ndarray:
    """Discrete Gaussian of length ``2 * radius + 1`` summing to one."""
    if not sigma > 0 or not math.isfinite(sigma):
        raise DomainError(f"sigma must be a positive finite number, got {sigma}")
    if radius is None:
        radius = default_radius(sigma)
    if int(radius) != radius or radius < 1:
        raise DomainError(f"radius must be an integer >= 1, got {radius}")
    radius = int(radius)
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-(offsets ** 2) / (2.0 * sigma * sigma))
    return w / w.sum()


def smooth(S, sigma: float = DEFAULT_SIGMA, radius: int | None = None) -> np.ndarray:
    """Convolve ``S`` with :func:`gaussian_kernel` under reflect padding.

    Reflection excludes the edge sample (``c b | a b c``), and repeats as
    needed when the kernel is wider than ``S``.
    """
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 1:
        raise DomainError(f"smooth expects a 1-d vector, got shape {S.shape}")
    if S.size == 0:
        raise DomainError("smooth of an empty vector")
    if not np.isfinite(S).all():
        raise DomainError("smooth: input contains non-finite values")
    kernel = gaussian_kernel(sigma, radius)
    r = (kernel.size - 1) // 2
    padded = np.pad(S, r, mode="reflect")
    # kernel is symmetric, so correlation == convolution
    out = np.zeros_like(S)
    for k, w in enumerate(kernel):
        out += w * padded[k:k + S.size]
    return out


@dataclass
class SemanticFeatures:
    """Raw tag likelihoods with their smoothed counterpart."""

    raw: np.ndarray
    sigma: float = DEFAULT_SIGMA
    radius: int | None = None
    smoothed: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.raw = np.asarray(self.raw, dtype=np.float64)
        if self.raw.ndim != 1 or self.raw.size == 0:
            raise ValidationError(f"semantic features must be a nonempty vector, got shape {self.raw.shape}")
        if not np.isfinite(self.raw).all() or (self.raw < 0).any() or (self.raw > 1).any():
            raise ValidationError("semantic likelihoods must lie in [0, 1]")
        if self.smoothed is None:
            self.smoothed = smooth(self.raw, self.sigma, self.radius)
        elif np.shape(self.smoothed) != self.raw.shape:
            raise ValidationError("smoothed features must have the same dimension as raw")
