"""
Description:
Hierarchical spectral-spatial encoder. Four stages of patch embedding followed by SSDW
blocks, then a top-down fusion that gives every stage the upsampled context of the deeper
stages. Volumes are channel-first [C,D,H,W]; the convolution kernels see a unit batch axis.

Stage plan (base channels C):
    stage 1  3x3x3 conv, stride 1        -> [C,   D,   H,   W  ]
    stage 2  2x2x2 patch conv, stride 2  -> [2C,  D/2, H/2, W/2]
    stage 3  1x2x2 patch conv            -> [4C,  D/2, H/4, W/4]
    stage 4  1x2x2 patch conv            -> [8C,  D/2, H/8, W/8]
Odd extents are zero-padded at the far end before striding. With block = 'conv3d' every SSDW
block is replaced by a dense k x k x k convolution inside the same residual wrapper.
"""

from dataclasses import dataclass, field

import mgir.load_env as mgir_env
from mgir.errors import ConfigurationError, DimensionError, ParameterError
from mgir.model.params import init_conv, init_depthwise, init_norm
from mgir.tensor import ops

logger = mgir_env.logger

STAGES = 4
MIN_SPECTRAL = 4
_AXES = ('D', 'H', 'W')


@dataclass
class LatentPyramid:
    levels: list
    # (stage, axis, extra) for every axis that was padded before a strided embedding
    padding: list = field(default_factory=list)

    @property
    def shapes(self):
        return [level.shape for level in self.levels]

    def __len__(self):
        return len(self.levels)


def stage_stride(stage):
    if stage == 1:
        return (1, 1, 1)
    if stage == 2:
        return (2, 2, 2)
    return (1, 2, 2)


def embed_kernel(stage):
    return (3, 3, 3) if stage == 1 else stage_stride(stage)


def init_encoder(store, cfg, rng, prefix='encoder'):
    channels = cfg.stage_channels
    for stage in range(1, STAGES + 1):
        c_in = 1 if stage == 1 else channels[stage - 2]
        c = channels[stage - 1]
        init_conv(store, rng, f"{prefix}.stage{stage}.embed", c_in, c, embed_kernel(stage))
        init_norm(store, f"{prefix}.stage{stage}.embed.norm", c)
        for block in range(cfg.stage_depths[stage - 1]):
            init_block(store, rng, f"{prefix}.stage{stage}.block{block}", c, cfg)
    for stage in range(1, STAGES + 1):
        c = channels[stage - 1]
        init_conv(store, rng, f"{prefix}.lateral{stage}", c, c, (1, 1, 1))
    for stage in range(1, STAGES):
        c = channels[stage - 1]
        init_conv(store, rng, f"{prefix}.reduce{stage}", channels[stage], c, (1, 1, 1))
        if cfg.fusion == 'concatenation':
            init_conv(store, rng, f"{prefix}.fuse{stage}", 2 * c, c, (1, 1, 1))


def init_ssdw(store, rng, name, channels, cfg):
    hidden = cfg.mlp_ratio * channels
    init_conv(store, rng, f"{name}.f2", channels, channels, (1, 1, 1))
    init_depthwise(store, rng, f"{name}.dw_spatial", channels, (1, cfg.spatial_kernel, cfg.spatial_kernel))
    init_depthwise(store, rng, f"{name}.dw_spectral", channels, (cfg.spectral_kernel, 1, 1))
    init_conv(store, rng, f"{name}.pointwise", channels, channels, (1, 1, 1))
    init_conv(store, rng, f"{name}.f1", channels, channels, (1, 1, 1))
    init_conv(store, rng, f"{name}.mlp.fc1", channels, hidden, (1, 1, 1))
    init_conv(store, rng, f"{name}.mlp.fc2", hidden, channels, (1, 1, 1))


def init_dense3d(store, rng, name, channels, cfg):
    hidden = cfg.mlp_ratio * channels
    k = cfg.dense_kernel
    init_conv(store, rng, f"{name}.f2", channels, channels, (1, 1, 1))
    init_conv(store, rng, f"{name}.dense", channels, channels, (k, k, k))
    init_conv(store, rng, f"{name}.f1", channels, channels, (1, 1, 1))
    init_conv(store, rng, f"{name}.mlp.fc1", channels, hidden, (1, 1, 1))
    init_conv(store, rng, f"{name}.mlp.fc2", hidden, channels, (1, 1, 1))


def init_block(store, rng, name, channels, cfg):
    if cfg.block == 'conv3d':
        init_dense3d(store, rng, name, channels, cfg)
    else:
        init_ssdw(store, rng, name, channels, cfg)


def _bias(x, bias):
    return ops.add(x, ops.reshape(bias, (1, -1, 1, 1, 1)))


def _conv(x, params, name, stride=1, padding=0):
    out = ops.conv3d(x, params[f"{name}.weight"], stride=stride, padding=padding)
    return _bias(out, params[f"{name}.bias"])


def _depthwise(x, params, name):
    return _bias(ops.depthwise_conv3d(x, params[f"{name}.weight"]), params[f"{name}.bias"])


def _batched(x):
    return ops.reshape(x, (1,) + tuple(x.shape))


def _unbatched(x):
    return ops.reshape(x, tuple(x.shape[1:]))


def patch_embed(x, stage, params, cfg, padding=None, prefix='encoder'):
    """Strided 3D convolution + layer norm over channels. x is [C,D,H,W]."""
    if stage not in range(1, STAGES + 1):
        raise ParameterError(f"stage must be in 1..{STAGES}, got {stage}")
    name = f"{prefix}.stage{stage}.embed"
    h = _batched(x)
    if stage == 1:
        h = _conv(h, params, name, padding=1)
    else:
        stride = stage_stride(stage)
        widths = [(0, 0), (0, 0)]
        for axis, extent, s in zip(_AXES, x.shape[1:], stride):
            extra = (-extent) % s
            widths.append((0, extra))
            if extra:
                logger.debug(f"Stage {stage} pads axis {axis} by {extra} before striding")
                if padding is not None:
                    padding.append((stage, axis, extra))
        if any(after for _, after in widths):
            h = ops.pad(h, widths)
        h = _conv(h, params, name, stride=stride)
    c = h.shape[1]
    h = ops.permute(h, (0, 2, 3, 4, 1))
    h = ops.layer_norm(h, c, params[f"{name}.norm.gamma"], params[f"{name}.norm.beta"])
    return _unbatched(ops.permute(h, (0, 4, 1, 2, 3)))


def dsc(x, params, name):
    """Spatial depthwise -> spectral depthwise -> pointwise, on [1,C,D,H,W]."""
    h = _depthwise(x, params, f"{name}.dw_spatial")
    h = _depthwise(h, params, f"{name}.dw_spectral")
    return _conv(h, params, f"{name}.pointwise")


def _residual_block(x, params, name, mixer):
    h = _batched(x)
    branch = mixer(_conv(h, params, f"{name}.f2"))
    mid = ops.add(_conv(branch, params, f"{name}.f1"), h)
    mlp = ops.gelu(_conv(mid, params, f"{name}.mlp.fc1"))
    out = ops.add(_conv(mlp, params, f"{name}.mlp.fc2"), mid)
    return _unbatched(out)


def ssdw(x, params, name):
    """
    Spectral-spatial depthwise block on [C,D,H,W]:
        x_mid = f1(DSC(f2(x))) + x
        out   = fc2(gelu(fc1(x_mid))) + x_mid
    """
    return _residual_block(x, params, name, lambda h: dsc(h, params, name))


def dense3d(x, params, name):
    """Same residual wrapper as ssdw with the DSC replaced by one dense k x k x k convolution."""
    k = params[f"{name}.dense.weight"].shape[2]
    return _residual_block(x, params, name, lambda h: _conv(h, params, f"{name}.dense", padding=k // 2))


def encoder_block(x, params, name, cfg):
    if cfg.block == 'conv3d':
        return dense3d(x, params, name)
    return ssdw(x, params, name)


def check_extents(shape):
    _, bands, height, width = shape
    if bands < MIN_SPECTRAL:
        raise ConfigurationError(f"stage 2 needs at least {MIN_SPECTRAL} spectral bands, got {bands}")
    for stage in range(2, STAGES + 1):
        need = 2 ** (stage - 1)
        if height < need or width < need:
            raise ConfigurationError(f"stage {stage} needs spatial extents >= {need}, got {height}x{width}")


def encode(m0, params, cfg, prefix='encoder'):
    """Lifted measurement [1,D,H,W] -> LatentPyramid of four fused levels."""
    if m0.ndim != 4 or m0.shape[0] != 1:
        raise DimensionError(f"encoder input must be [1,D,H,W], got {m0.shape}")
    check_extents(m0.shape)

    padding = []
    stages = []
    h = m0
    for stage in range(1, STAGES + 1):
        h = patch_embed(h, stage, params, cfg, padding, prefix)
        for block in range(cfg.stage_depths[stage - 1]):
            h = encoder_block(h, params, f"{prefix}.stage{stage}.block{block}", cfg)
        stages.append(h)

    levels = [None] * STAGES
    levels[-1] = _unbatched(_conv(_batched(stages[-1]), params, f"{prefix}.lateral{STAGES}"))
    for stage in range(STAGES - 1, 0, -1):
        lateral = _unbatched(_conv(_batched(stages[stage - 1]), params, f"{prefix}.lateral{stage}"))
        top = _unbatched(_conv(_batched(levels[stage]), params, f"{prefix}.reduce{stage}"))
        up = ops.upsample_trilinear(top, lateral.shape[1:])
        if cfg.fusion == 'addition':
            levels[stage - 1] = ops.add(lateral, up)
        else:
            fused = _batched(ops.concat([lateral, up], axis=0))
            levels[stage - 1] = _unbatched(_conv(fused, params, f"{prefix}.fuse{stage}"))
    return LatentPyramid(levels, padding)


def flops(kind, H, W, D, C, M):
    """Closed-form operation counts of one block at extents H,W,D, channels C and kernel/window M."""
    for name, value in (('H', H), ('W', W), ('D', D), ('C', C), ('M', M)):
        if value < 1:
            raise ParameterError(f"{name} must be >= 1, got {value}")
    n = H * W * D
    if kind == 'W-MSA':
        return 4 * n * C ** 2 + 2 * M ** 3 * n * C
    if kind == 'G-MSA':
        return 4 * n * C ** 2 + 2 * n ** 2 * C
    if kind == 'SSDW':
        return (M ** 2 + M) * n * C + 2 * n * C ** 2
    if kind == 'Conv3D':
        return M ** 3 * n * C ** 2 + 2 * n * C ** 2
    raise ParameterError(f"unknown block kind {kind!r}; expected W-MSA, G-MSA, SSDW or Conv3D")


def pyramid_shapes(shape, cfg):
    """Level shapes the encoder produces for a [1,D,H,W] input, without running it."""
    _, d, h, w = shape
    out = []
    for stage, c in enumerate(cfg.stage_channels, start=1):
        sd, sh, sw = stage_stride(stage)
        d, h, w = -(-d // sd), -(-h // sh), -(-w // sw)
        out.append((c, d, h, w))
    return out


def ssdw_macs(H, W, D, C, cfg):
    """Multiply-accumulates of one SSDW block as built here, biases excluded."""
    n = H * W * D
    return n * C * (cfg.spatial_kernel ** 2 + cfg.spectral_kernel) + n * C * C * (3 + 2 * cfg.mlp_ratio)


def block_macs(H, W, D, C, cfg):
    """Multiply-accumulates of one encoder block of the configured kind."""
    if cfg.block == 'conv3d':
        return H * W * D * C * C * (cfg.dense_kernel ** 3 + 2 + 2 * cfg.mlp_ratio)
    return ssdw_macs(H, W, D, C, cfg)

