"""
Description:
Mixed-granularity local feature aggregator.

For every query coordinate (lambda, y, x) in [-1,1]^3 and every pyramid level j:
    Z_j*  trilinear sample of level j, projected to the model dim C
    Z_j   the J^3 nearest cell-center codes around the query, projected to C
Then
    Q     = sum_j Z_j* W_j^Q            (or a linear map of their concatenation)
    K_j   = Z_j W_j^K + RPE_j,  V_j = Z_j W_j^V + RPE_j
    out   = concat_j MHA(Q_j, K_j, V_j) + Q
where Q_j is the j-th channel-contiguous slice of Q and head group j only sees level j.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from mgir.errors import ConfigurationError, DimensionError
from mgir.model.params import init_linear
from mgir.tensor import ops
from mgir.tensor.tensor import Tensor


@dataclass
class QueryBatch:
    coords: Tensor
    # per level: [P, J^3, C] projected window codes, [P, J^3, 3] key-minus-query offsets,
    # [P, C] projected trilinear query codes
    windows: list
    offsets: list
    query_codes: list

    @property
    def size(self):
        return self.coords.shape[0]


def rpe_init(frequencies):
    """omega_i = 2 e^i for i = 1..R"""
    return 2.0 * np.exp(np.arange(1, frequencies + 1, dtype=np.float64))


def init_aggregator(store, cfg, level_channels, rng, prefix='aggregator'):
    c = cfg.model_dim
    for j, c_level in enumerate(level_channels[:cfg.groups], start=1):
        init_linear(store, rng, f"{prefix}.proj{j}", c_level, c)
    for j in range(1, cfg.groups + 1):
        init_linear(store, rng, f"{prefix}.q{j}", c, c, bias=False)
        init_linear(store, rng, f"{prefix}.k{j}", c, cfg.group_dim, bias=False)
        init_linear(store, rng, f"{prefix}.v{j}", c, cfg.group_dim, bias=False)
    if cfg.query_fusion == 'concatenation':
        init_linear(store, rng, f"{prefix}.q_fuse", cfg.groups * c, c)
    if cfg.use_rpe:
        store.add(f"{prefix}.rpe.omegas", rpe_init(cfg.rpe_frequencies))
        init_linear(store, rng, f"{prefix}.rpe.proj", 6 * cfg.rpe_frequencies, c)


def check_config(cfg, levels):
    errors = cfg.validate()
    if cfg.groups > levels:
        errors.append(f"aggregator.groups ({cfg.groups}) exceeds the {levels} pyramid levels")
    if errors:
        raise ConfigurationError("invalid aggregator configuration", errors)


def _linear(x, params, name):
    out = ops.matmul(x, params[f"{name}.weight"])
    bias_name = f"{name}.bias"
    if bias_name in params:
        out = ops.add(out, params[bias_name])
    return out


def _flat_cells(level):
    # [C,D,H,W] -> [D*H*W, C]
    c = level.shape[0]
    return ops.permute(ops.reshape(level, (c, -1)), (1, 0))


def window_indices(coords, extents, window):
    """
    Flat indices [P, J^3] of the J^3 cell centers nearest each coordinate, clamped to the
    grid, plus the normalized centers [P, J^3, 3] of those cells.
    """
    extents = np.asarray(extents)
    continuous = ((np.clip(coords, -1.0, 1.0) + 1.0) * extents - 1.0) / 2.0
    start = np.floor(continuous - window / 2.0 + 1.0).astype(np.int64)
    steps = np.array(list(itertools.product(range(window), repeat=3)), dtype=np.int64)
    cells = np.clip(start[:, None, :] + steps[None, :, :], 0, extents - 1)
    flat = np.ravel_multi_index((cells[..., 0], cells[..., 1], cells[..., 2]), tuple(extents))
    centers = -1.0 + (2.0 * cells + 1.0) / extents
    return flat, centers


def query_code(level, coords, params, name):
    """Trilinear sample of level at coords [P,3] (or [3]) followed by the level projection."""
    single = coords.ndim == 1
    if single:
        coords = ops.reshape(coords, (1, 3))
    code = _linear(ops.trilinear_sample(level, coords), params, name)
    return ops.reshape(code, (code.shape[1],)) if single else code


def gather_windows(pyramid, coords, params, cfg, prefix='aggregator'):
    levels = pyramid.levels if hasattr(pyramid, 'levels') else list(pyramid)
    check_config(cfg, len(levels))
    if coords.ndim != 2 or coords.shape[1] != 3:
        raise DimensionError(f"coords must be [P,3], got {coords.shape}", axis=1)
    windows, offsets, query_codes = [], [], []
    for j, level in enumerate(levels[:cfg.groups], start=1):
        name = f"{prefix}.proj{j}"
        flat, centers = window_indices(coords.data.astype(np.float64), level.shape[1:], cfg.window)
        projected = _linear(_flat_cells(level), params, name)
        windows.append(ops.take(projected, flat, axis=0))
        offsets.append(Tensor(centers - coords.data.astype(np.float64)[:, None, :]))
        query_codes.append(query_code(level, coords, params, name))
    return QueryBatch(coords, windows, offsets, query_codes)


def rpe_features(offsets, omegas):
    """[P,K,3] offsets -> [P,K,6R]: per component, R cosines then R sines."""
    p, k, _ = offsets.shape
    angles = ops.mul(ops.reshape(offsets, (p, k, 3, 1)), omegas)
    features = ops.concat([ops.cos(angles), ops.sin(angles)], axis=3)
    return ops.reshape(features, (p, k, 6 * omegas.shape[0]))


def rpe(offsets, params, prefix='aggregator'):
    features = rpe_features(offsets, params[f"{prefix}.rpe.omegas"])
    return _linear(features, params, f"{prefix}.rpe.proj")


def _fused_query(batch, params, cfg, prefix):
    q_parts = [ops.matmul(batch.query_codes[j], params[f"{prefix}.q{j + 1}.weight"]) for j in range(cfg.groups)]
    if cfg.query_fusion == 'concatenation':
        return _linear(ops.concat(q_parts, axis=1), params, f"{prefix}.q_fuse")
    query = q_parts[0]
    for part in q_parts[1:]:
        query = ops.add(query, part)
    return query


def _group_attention(batch, query, j, params, cfg, prefix):
    # head group j attends over the window of level j only
    p = batch.size
    heads, head_dim, group_dim = cfg.heads // cfg.groups, cfg.head_dim, cfg.group_dim
    channels = np.arange(j * group_dim, (j + 1) * group_dim)
    window = batch.windows[j]
    keys = window.shape[1]
    k = ops.matmul(window, params[f"{prefix}.k{j + 1}.weight"])
    v = ops.matmul(window, params[f"{prefix}.v{j + 1}.weight"])
    if cfg.use_rpe:
        pos = ops.take(rpe(batch.offsets[j], params, prefix), channels, axis=2)
        k = ops.add(k, pos)
        v = ops.add(v, pos)
    q = ops.reshape(ops.take(query, channels, axis=1), (p, heads, 1, head_dim))
    k = ops.permute(ops.reshape(k, (p, keys, heads, head_dim)), (0, 2, 3, 1))
    v = ops.permute(ops.reshape(v, (p, keys, heads, head_dim)), (0, 2, 1, 3))
    weights = ops.softmax(ops.mul(ops.matmul(q, k), 1.0 / np.sqrt(head_dim)), axis=-1)
    return weights, ops.reshape(ops.matmul(weights, v), (p, group_dim))


def aggregate(batch, params, cfg, prefix='aggregator'):
    """Mixed-granularity latent code [P, C] per query."""
    check_config(cfg, len(batch.windows))
    query = _fused_query(batch, params, cfg, prefix)
    outputs = [_group_attention(batch, query, j, params, cfg, prefix)[1] for j in range(cfg.groups)]
    merged = outputs[0] if cfg.groups == 1 else ops.concat(outputs, axis=1)
    return ops.add(merged, query)

