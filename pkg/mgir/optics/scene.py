"""
Description:
Synthetic desk-scale scenes: Gaussian blobs, each with its own smooth spectral ramp.
"""

import numpy as np

from mgir.errors import ParameterError
from mgir.optics.cassi import HyperCube, default_wavelengths
from mgir.tensor.tensor import Tensor


def synthetic_scene(bands, height, width, blobs=4, seed=0, wavelength_range=(400.0, 700.0)):
    if min(bands, height, width) < 1:
        raise ParameterError(f"scene extents must be >= 1, got {bands}x{height}x{width}")
    if blobs < 1:
        raise ParameterError(f"need at least one blob, got {blobs}")
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(np.arange(height) + 0.5, np.arange(width) + 0.5, indexing='ij')
    lam = np.linspace(0.0, 1.0, bands)
    cube = np.zeros((bands, height, width))
    for _ in range(blobs):
        cy, cx = rng.uniform(0, height), rng.uniform(0, width)
        radius = rng.uniform(0.15, 0.35) * min(height, width)
        footprint = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * radius ** 2))
        # linear ramp plus a broad spectral bump
        start, end = rng.uniform(0.1, 0.9, size=2)
        peak, spread = rng.uniform(0.0, 1.0), rng.uniform(0.2, 0.6)
        spectrum = (start + (end - start) * lam) * (0.6 + 0.4 * np.exp(-(lam - peak) ** 2 / (2.0 * spread ** 2)))
        cube += spectrum[:, None, None] * footprint[None]
    cube = 0.05 + 0.9 * cube / max(cube.max(), 1e-12)
    return HyperCube(Tensor(cube), default_wavelengths(bands, wavelength_range))
