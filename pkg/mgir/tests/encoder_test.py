import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mgir.config import EncoderConfig, RunConfig
from mgir.errors import ConfigurationError, DimensionError, ParameterError
from mgir.model import encoder
from mgir.model.network import build_parameter_store
from mgir.model.params import ParameterStore, count_params
from mgir.tensor import ops
from mgir.tensor.tensor import Tensor, count_macs, precision

TOY_PARAMETERS = 87477
# the dense block trades 7C^2 + 38C parameters for C^2 (k^3 + 6) + 6C
TOY_DENSE_PARAMETERS = {3: TOY_PARAMETERS + 137600, 5: TOY_PARAMETERS + 670720}


def _encoder_store(cfg, seed=0):
    store = ParameterStore()
    encoder.init_encoder(store, cfg, np.random.default_rng(seed))
    return store


@settings(max_examples=10, deadline=None)
@given(st.integers(4, 9), st.integers(8, 14), st.integers(8, 14))
def test_pyramid_shape_law(bands, height, width):
    cfg = EncoderConfig(base_channels=2, stage_depths=(0, 0, 0, 0))
    params = _encoder_store(cfg)
    m0 = Tensor(np.random.default_rng(bands).uniform(size=(1, bands, height, width)))
    pyramid = encoder.encode(m0, params, cfg)
    half = math.ceil(bands / 2)
    expected = [(2, bands, height, width),
                (4, half, math.ceil(height / 2), math.ceil(width / 2)),
                (8, half, math.ceil(height / 4), math.ceil(width / 4)),
                (16, half, math.ceil(height / 8), math.ceil(width / 8))]
    assert pyramid.shapes == expected
    assert encoder.pyramid_shapes(m0.shape, cfg) == expected


def test_odd_extents_record_padding():
    cfg = EncoderConfig(base_channels=2, stage_depths=(0, 0, 0, 0))
    pyramid = encoder.encode(Tensor(np.ones((1, 5, 9, 8))), _encoder_store(cfg), cfg)
    assert (2, 'D', 1) in pyramid.padding
    assert (2, 'H', 1) in pyramid.padding
    assert (2, 'W', 0) not in pyramid.padding
    assert (3, 'H', 1) in pyramid.padding


def test_toy_encoder_levels_and_determinism(toy_cfg):
    params = build_parameter_store(toy_cfg)
    m0 = Tensor(np.random.default_rng(3).uniform(size=(1, 8, 16, 16)))
    first = encoder.encode(m0, params, toy_cfg.encoder)
    second = encoder.encode(m0, params, toy_cfg.encoder)
    assert len(first) == 4
    assert first.shapes == [(8, 8, 16, 16), (16, 4, 8, 8), (32, 4, 4, 4), (64, 4, 2, 2)]
    for a, b in zip(first.levels, second.levels):
        np.testing.assert_array_equal(a.data, b.data)


def test_concatenation_fusion_keeps_level_shapes():
    cfg = EncoderConfig(base_channels=2, stage_depths=(1, 0, 0, 1), fusion='concatenation',
                        spatial_kernel=3, spectral_kernel=3)
    params = _encoder_store(cfg)
    assert 'encoder.fuse1.weight' in params
    pyramid = encoder.encode(Tensor(np.ones((1, 4, 8, 8))), params, cfg)
    assert pyramid.shapes == encoder.pyramid_shapes((1, 4, 8, 8), cfg)


def test_input_extent_checks():
    cfg = EncoderConfig(base_channels=2, stage_depths=(0, 0, 0, 0))
    params = _encoder_store(cfg)
    with pytest.raises(ConfigurationError, match='spectral'):
        encoder.encode(Tensor(np.ones((1, 3, 8, 8))), params, cfg)
    with pytest.raises(ConfigurationError, match='stage 4'):
        encoder.encode(Tensor(np.ones((1, 4, 4, 8))), params, cfg)
    with pytest.raises(DimensionError):
        encoder.encode(Tensor(np.ones((4, 8, 8))), params, cfg)
    with pytest.raises(ParameterError):
        encoder.patch_embed(Tensor(np.ones((1, 4, 8, 8))), 5, params, cfg)


def test_ssdw_is_identity_with_zeroed_output_layers(rng):
    cfg = EncoderConfig(base_channels=4)
    store = ParameterStore()
    encoder.init_ssdw(store, rng, 'blk', 4, cfg)
    for name in ('blk.f1.weight', 'blk.f1.bias', 'blk.mlp.fc2.weight', 'blk.mlp.fc2.bias'):
        store[name].data[...] = 0.0
    x = Tensor(rng.normal(size=(4, 3, 5, 5)))
    np.testing.assert_array_equal(encoder.ssdw(x, store, 'blk').data, x.data)


def test_ssdw_preserves_shape(rng):
    cfg = EncoderConfig(base_channels=8)
    store = ParameterStore()
    encoder.init_ssdw(store, rng, 'blk', 8, cfg)
    assert encoder.ssdw(Tensor(rng.normal(size=(8, 4, 6, 6))), store, 'blk').shape == (8, 4, 6, 6)


def test_flops_reference_values():
    assert encoder.flops('SSDW', 4, 4, 4, 8, 5) == 23552
    assert encoder.flops('W-MSA', 4, 4, 4, 8, 5) == 144384
    assert encoder.flops('G-MSA', 4, 4, 4, 8, 5) == 4 * 64 * 64 + 2 * 64 ** 2 * 8


def test_flops_rejects_bad_arguments():
    with pytest.raises(ParameterError):
        encoder.flops('SSDW', 0, 4, 4, 8, 5)
    with pytest.raises(ParameterError):
        encoder.flops('conv', 4, 4, 4, 8, 5)


@settings(max_examples=100)
@given(st.integers(1, 64), st.integers(1, 64), st.integers(1, 32), st.integers(1, 128), st.integers(1, 9))
def test_flops_polynomials(h, w, d, c, m):
    n = h * w * d
    assert encoder.flops('W-MSA', h, w, d, c, m) == 4 * n * c * c + 2 * m ** 3 * n * c
    assert encoder.flops('G-MSA', h, w, d, c, m) == 4 * n * c * c + 2 * n * n * c
    assert encoder.flops('SSDW', h, w, d, c, m) == (m * m + m) * n * c + 2 * n * c * c
    if m >= 2 and n > m ** 3:
        assert (encoder.flops('SSDW', h, w, d, c, m) < encoder.flops('W-MSA', h, w, d, c, m)
                < encoder.flops('G-MSA', h, w, d, c, m))


def test_global_attention_term_scales_quadratically():
    def attention(h, w, d, c=8):
        return encoder.flops('G-MSA', h, w, d, c, 5) - 4 * h * w * d * c * c
    assert attention(8, 8, 8) == 64 * attention(4, 4, 4)


def test_ssdw_mac_count_matches_accountant(rng):
    cfg = EncoderConfig(base_channels=8)
    store = ParameterStore()
    encoder.init_ssdw(store, rng, 'blk', 8, cfg)
    with precision(np.float64), count_macs() as counter:
        encoder.ssdw(Tensor(rng.normal(size=(8, 4, 4, 4))), store, 'blk')
    measured = counter.total
    assert measured == encoder.ssdw_macs(4, 4, 4, 8, cfg)
    # the block adds the MLP and two pointwise convs on top of the closed form
    assert measured < 2 * encoder.flops('SSDW', 4, 4, 4, 8, 5)


def test_toy_parameter_count(toy_cfg):
    assert count_params(build_parameter_store(toy_cfg)) == TOY_PARAMETERS


def _pointwise(x, store, name):
    weight = store[f"{name}.weight"].data[:, :, 0, 0, 0]
    return np.einsum('oc,cdhw->odhw', weight, x) + store[f"{name}.bias"].data[:, None, None, None]


def test_ssdw_with_identity_dsc_reduces_to_the_residual_mlp(rng):
    cfg = EncoderConfig(base_channels=4)
    store = ParameterStore()
    encoder.init_ssdw(store, rng, 'blk', 4, cfg)
    store = store.copy(np.float64)
    for name in ('blk.dw_spatial', 'blk.dw_spectral', 'blk.pointwise'):
        store[f"{name}.weight"].data[...] = 0.0
        store[f"{name}.bias"].data[...] = 0.0
    store['blk.dw_spatial.weight'].data[:, 0, 0, 2, 2] = 1.0
    store['blk.dw_spectral.weight'].data[:, 0, 2, 0, 0] = 1.0
    store['blk.pointwise.weight'].data[:, :, 0, 0, 0] = np.eye(4)
    x = rng.normal(size=(4, 5, 6, 6))
    with precision(np.float64):
        out = encoder.ssdw(Tensor(x), store, 'blk').data
        mid = _pointwise(_pointwise(x, store, 'blk.f2'), store, 'blk.f1') + x
        hidden = ops.gelu(Tensor(_pointwise(mid, store, 'blk.mlp.fc1'))).data
    expected = _pointwise(hidden, store, 'blk.mlp.fc2') + mid
    np.testing.assert_allclose(out, expected, atol=1e-6)


@pytest.mark.parametrize('block, kernel, expected', [('ssdw', 3, 752), ('conv3d', 3, 2160), ('conv3d', 5, 8432)])
def test_block_parameter_counts(rng, block, kernel, expected):
    cfg = EncoderConfig(base_channels=8, block=block, dense_kernel=kernel)
    store = ParameterStore()
    encoder.init_block(store, rng, 'blk', 8, cfg)
    assert count_params(store) == expected
    assert ('blk.dense.weight' in store) == (block == 'conv3d')
    assert ('blk.dw_spatial.weight' in store) == (block == 'ssdw')


@pytest.mark.parametrize('kernel, expected', [(3, 4096 * 33), (5, 4096 * 131)])
def test_dense_block_mac_count_matches_accountant(rng, kernel, expected):
    cfg = EncoderConfig(base_channels=8, block='conv3d', dense_kernel=kernel)
    store = ParameterStore()
    encoder.init_block(store, rng, 'blk', 8, cfg)
    x = Tensor(rng.normal(size=(8, 4, 4, 4)))
    with precision(np.float64), count_macs() as counter:
        out = encoder.encoder_block(x, store, 'blk', cfg)
    assert out.shape == (8, 4, 4, 4)
    assert counter.total == encoder.block_macs(4, 4, 4, 8, cfg) == expected
    assert encoder.block_macs(4, 4, 4, 8, EncoderConfig(base_channels=8)) == 44032


def test_dense_blocks_cost_more_than_ssdw():
    assert encoder.flops('Conv3D', 4, 4, 4, 8, 3) == 118784
    assert encoder.flops('Conv3D', 4, 4, 4, 8, 5) > encoder.flops('Conv3D', 4, 4, 4, 8, 3) > encoder.flops('SSDW', 4, 4, 4, 8, 5)


@settings(max_examples=100)
@given(st.integers(1, 32), st.integers(1, 32), st.integers(1, 16), st.integers(1, 64), st.integers(1, 7))
def test_dense_flops_polynomial(h, w, d, c, m):
    n = h * w * d
    assert encoder.flops('Conv3D', h, w, d, c, m) == m ** 3 * n * c * c + 2 * n * c * c


@pytest.mark.parametrize('kernel', [3, 5])
def test_toy_parameter_count_with_dense_blocks(toy_cfg, kernel):
    cfg = toy_cfg.replace(encoder=dataclasses.replace(toy_cfg.encoder, block='conv3d', dense_kernel=kernel))
    params = build_parameter_store(cfg)
    assert count_params(params) == TOY_DENSE_PARAMETERS[kernel]
    pyramid = encoder.encode(Tensor(np.ones((1, 4, 8, 8))), params, cfg.encoder)
    assert pyramid.shapes == encoder.pyramid_shapes((1, 4, 8, 8), cfg.encoder)


def test_shallow_preset_drops_two_deep_blocks():
    full, shallow = RunConfig.preset('full'), RunConfig.preset('mgir_a')
    assert shallow.encoder.stage_depths == (2, 2, 2, 2)
    assert shallow.aggregator.model_dim == 32
    assert shallow.encoder.stage_channels == full.encoder.stage_channels
    # the full preset stacks two more SSDW blocks at stage 3 (C=64) and at stage 4 (C=128)
    extra = sum(2 * (7 * c * c + 38 * c) for c in (64, 128))
    assert count_params(_encoder_store(full.encoder)) - count_params(_encoder_store(shallow.encoder)) == extra
