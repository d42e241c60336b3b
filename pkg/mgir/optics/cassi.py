"""
Description:
CASSI forward model: coded-mask encoding, integer-pixel dispersion, detector integration,
and the shift-back lifting that turns a measurement into the encoder's initial volume.

cube    - HyperCube, reflectance [D,H,W] in [0,1] with per-band wavelengths
mask    - CodedMask [H,W], binary Bernoulli(density) or gray uniform
shift_d - column displacement per band index; band b lands at columns [d*b, d*b + W)
"""

from dataclasses import dataclass

import numpy as np

import mgir.load_env as mgir_env
from mgir.errors import DimensionError, ParameterError
from mgir.tensor.tensor import Tensor

logger = mgir_env.logger


@dataclass
class HyperCube:
    data: Tensor
    wavelengths: tuple

    def __post_init__(self):
        if self.data.ndim != 3:
            raise DimensionError(f"hypercube data must be [D,H,W], got {self.data.shape}")
        if len(self.wavelengths) != self.data.shape[0]:
            raise DimensionError(f"{len(self.wavelengths)} wavelengths for {self.data.shape[0]} bands", axis='D')
        if len(self.wavelengths) > 1 and not np.all(np.diff(self.wavelengths) > 0):
            raise ParameterError("wavelengths must be strictly increasing")
        self.data = Tensor(np.clip(self.data.data, 0.0, 1.0))
        self.wavelengths = tuple(float(w) for w in self.wavelengths)

    @property
    def shape(self):
        return self.data.shape

    @staticmethod
    def from_array(array, wavelength_range=(400.0, 700.0)):
        array = np.asarray(array)
        return HyperCube(Tensor(array), default_wavelengths(array.shape[0], wavelength_range))


@dataclass
class CodedMask:
    data: Tensor
    seed: int
    density: float = 0.5


@dataclass
class Measurement:
    data: Tensor
    shift_d: int
    band_count: int

    def __post_init__(self):
        height, width = self.data.shape
        if width < self.shift_d * (self.band_count - 1) + 1:
            raise DimensionError(f"measurement width {width} too small for {self.band_count} bands at shift "
                                 f"{self.shift_d}", axis='W')

    @property
    def scene_width(self):
        return self.data.shape[1] - self.shift_d * (self.band_count - 1)


def default_wavelengths(bands, wavelength_range=(400.0, 700.0)):
    if bands == 1:
        return (float(wavelength_range[0]),)
    return tuple(np.linspace(wavelength_range[0], wavelength_range[1], bands).tolist())


def make_mask(height, width, density=0.5, seed=0, binary=True):
    if height < 1 or width < 1:
        raise ParameterError(f"mask extents must be >= 1, got {height}x{width}")
    if not 0 < density < 1:
        raise ParameterError(f"mask density must lie in (0,1), got {density}")
    rng = np.random.default_rng(seed)
    draws = rng.random((height, width))
    data = (draws < density).astype(np.float32) if binary else draws.astype(np.float32)
    logger.debug(f"Created {'binary' if binary else 'gray'} {height}x{width} mask, seed {seed}")
    return CodedMask(Tensor(data), seed, density)


def encode(cube, mask):
    """Multiply every band by the mask."""
    if cube.shape[1:] != mask.data.shape:
        raise DimensionError(f"mask {mask.data.shape} does not match scene extents {cube.shape[1:]}", axis='HW')
    return Tensor(cube.data.data * mask.data.data[None, :, :])


def disperse_integrate(encoded, shift_d):
    """measurement[u, v] = sum_b encoded[b, u, v - shift_d*b]"""
    if shift_d < 0:
        raise ParameterError(f"shift_d must be >= 0, got {shift_d}")
    if encoded.ndim != 3:
        raise DimensionError(f"encoded cube must be [D,H,W], got {encoded.shape}")
    bands, height, width = encoded.shape
    out = np.zeros((height, width + shift_d * (bands - 1)), dtype=encoded.data.dtype)
    rows = np.arange(height)[None, :, None]
    cols = np.arange(width)[None, None, :] + shift_d * np.arange(bands)[:, None, None]
    np.add.at(out, (rows, cols), encoded.data)
    return Measurement(Tensor(out), shift_d, bands)


def simulate(cube, mask, shift_d):
    meas = disperse_integrate(encode(cube, mask), shift_d)
    logger.debug(f"Simulated {cube.shape} scene into {meas.data.shape} measurement at shift {shift_d}")
    return meas


def lift_measurement(meas):
    """Shift-back crop: slice b is columns [d*b, d*b + W). Returns [1,D,H,W]."""
    width = meas.scene_width
    cols = np.arange(width)[None, :] + meas.shift_d * np.arange(meas.band_count)[:, None]
    volume = np.moveaxis(meas.data.data[:, cols], 1, 0)
    return Tensor(volume[None])
