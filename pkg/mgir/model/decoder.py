"""
Description:
Implicit decoder f_theta and arbitrary-resolution reconstruction.

The decoder maps concat(latent code, coordinate) to one intensity per (lambda, y, x) query,
so the band count and spatial extents of the output are free at inference time.
"""

from dataclasses import dataclass

import numpy as np

import mgir.load_env as mgir_env
from mgir.errors import BudgetError, DimensionError, NormalizationError, ParameterError
from mgir.model import aggregator, encoder
from mgir.model.params import init_linear
from mgir.optics.cassi import HyperCube, default_wavelengths, lift_measurement
from mgir.tensor import ops
from mgir.tensor.tensor import Tensor

logger = mgir_env.logger

_ACTIVATIONS = {'gelu': ops.gelu, 'relu': ops.relu}


@dataclass(frozen=True)
class ReconstructionRequest:
    out_bands: int
    out_height: int
    out_width: int
    wavelength_range: tuple = (400.0, 700.0)

    def __post_init__(self):
        for name in ('out_bands', 'out_height', 'out_width'):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be >= 1, got {getattr(self, name)}")
        low, high = self.wavelength_range
        if self.out_bands > 1 and not low < high:
            raise ParameterError(f"wavelength range must be increasing, got {self.wavelength_range}")

    @property
    def shape(self):
        return (self.out_bands, self.out_height, self.out_width)

    @property
    def voxels(self):
        return self.out_bands * self.out_height * self.out_width


def normalize_grid(req):
    """Cell-center coordinates [P,3] of the requested grid in (lambda, y, x) row-major order."""
    return Tensor(ops.cell_centers(req.shape))


def init_decoder(store, cfg, code_dim, rng, prefix='decoder'):
    fan_in = code_dim + 3
    for i, hidden in enumerate(cfg.hidden_dims):
        init_linear(store, rng, f"{prefix}.fc{i}", fan_in, hidden)
        fan_in = hidden
    init_linear(store, rng, f"{prefix}.out", fan_in, 1)


def _linear(x, params, name):
    return ops.add(ops.matmul(x, params[f"{name}.weight"]), params[f"{name}.bias"])


def decode(codes, coords, params, cfg, prefix='decoder'):
    if codes.shape[0] != coords.shape[0]:
        raise DimensionError(f"{codes.shape[0]} codes for {coords.shape[0]} coordinates", axis=0)
    activation = _ACTIVATIONS[cfg.activation]
    h = ops.concat([codes, coords], axis=1)
    for i in range(len(cfg.hidden_dims)):
        h = activation(_linear(h, params, f"{prefix}.fc{i}"))
    return _linear(h, params, f"{prefix}.out")


def predict(pyramid, coords, params, run_cfg):
    """
    Raw intensities [P,1] at coords for an encoded pyramid. Training and reconstruction
    both go through here, so the same coordinates give the same values.
    """
    batch = aggregator.gather_windows(pyramid, coords, params, run_cfg.aggregator)
    codes = aggregator.aggregate(batch, params, run_cfg.aggregator)
    return decode(codes, coords, params, run_cfg.decoder)


def _runtime(key, value):
    if value is not None:
        return int(value)
    return mgir_env.config.getint('RUNTIME', key)


def reconstruct_values(meas, params, run_cfg, req, voxel_budget=None, chunk_size=None):
    """Numpy [B,H,W] reconstruction, clamped according to the decoder config."""
    voxel_budget = _runtime('VOXEL_BUDGET', voxel_budget)
    chunk_size = _runtime('CHUNK_SIZE', chunk_size)
    if req.voxels > voxel_budget:
        logger.error(f"Refusing {req.shape} reconstruction: {req.voxels} voxels exceed the budget")
        raise BudgetError(f"requested grid {req.shape} has {req.voxels} voxels, above the limit of "
                          f"{voxel_budget}", limit=voxel_budget)
    if chunk_size < 1:
        raise ParameterError(f"chunk size must be >= 1, got {chunk_size}")

    pyramid = encoder.encode(lift_measurement(meas), params, run_cfg.encoder)
    coords = normalize_grid(req).data
    total = coords.shape[0]
    out = np.empty(total, dtype=np.float32)
    chunks = -(-total // chunk_size)
    logger.info(f"Reconstructing {req.shape} in {chunks} chunk(s) of {chunk_size} queries")
    for start in range(0, total, chunk_size):
        part = coords[start:start + chunk_size]
        n = part.shape[0]
        if n < chunk_size:
            # every chunk runs at one shape; padded rows are discarded
            part = np.concatenate([part, np.repeat(part[-1:], chunk_size - n, axis=0)])
        values = predict(pyramid, Tensor(part), params, run_cfg)
        if run_cfg.decoder.output_clamp == 'unit':
            values = ops.clamp(values, 0.0, 1.0)
        out[start:start + n] = values.data[:n, 0]
    return out.reshape(req.shape)


def reconstruct(meas, params, run_cfg, req, voxel_budget=None, chunk_size=None):
    values = reconstruct_values(meas, params, run_cfg, req, voxel_budget, chunk_size)
    return HyperCube(Tensor(values), default_wavelengths(req.out_bands, req.wavelength_range))


def liif_baseline_blend(values, weights, tolerance=1e-4):
    """Convex blend sum_i w_i v_i of neighbor predictions [P_n,1] -> [1]."""
    w = weights.data
    if values.shape[0] != w.shape[0]:
        raise DimensionError(f"{values.shape[0]} values for {w.shape[0]} weights", axis=0)
    if np.any(w < 0):
        raise NormalizationError(f"blend weights must be nonnegative, got {w.tolist()}")
    total = float(np.sum(w, dtype=np.float64))
    if abs(total - 1.0) > tolerance:
        raise NormalizationError(f"blend weights sum to {total}, expected 1 within {tolerance}")
    return ops.reshape(ops.matmul(ops.reshape(weights, (1, -1)), values), (1,))
