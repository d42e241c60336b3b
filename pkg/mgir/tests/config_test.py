import json

import pytest

from mgir.config import AggregatorConfig, EncoderConfig, RunConfig
from mgir.errors import ConfigurationError


def test_toy_preset(toy_cfg):
    assert toy_cfg.encoder.stage_channels == (8, 16, 32, 64)
    assert toy_cfg.encoder.stage_depths == (1, 1, 1, 1)
    assert toy_cfg.aggregator.model_dim == 32
    assert toy_cfg.aggregator.head_dim == 8
    assert toy_cfg.decoder.hidden_dims == (64, 64, 64)
    assert toy_cfg.train.lr == 1e-3
    assert toy_cfg.validate() == []


def test_full_scale_preset():
    cfg = RunConfig.preset('full')
    assert cfg.encoder.stage_depths == (2, 2, 4, 4)
    assert cfg.aggregator.model_dim == 64
    assert cfg.train.lr == 4e-4


def test_shallow_preset():
    cfg = RunConfig.preset('mgir_a')
    assert cfg.encoder.stage_depths == (2, 2, 2, 2)
    assert cfg.encoder.block == 'ssdw'
    assert cfg.aggregator.model_dim == 32
    assert cfg.validate() == []


def test_dense_block_switch_from_document(toy_cfg):
    document = toy_cfg.to_dict()
    document['encoder'].update(block='conv3d', dense_kernel=5)
    cfg = RunConfig.from_dict(document)
    assert (cfg.encoder.block, cfg.encoder.dense_kernel) == ('conv3d', 5)


def test_unknown_preset():
    with pytest.raises(ConfigurationError, match='unknown preset'):
        RunConfig.preset('nope')


def test_document_roundtrip(toy_cfg):
    document = json.loads(json.dumps(toy_cfg.to_dict()))
    assert document['encoder']['stage_depths'] == [1, 1, 1, 1]
    assert RunConfig.from_dict(document) == toy_cfg


def test_defaults_fill_missing_sections():
    assert RunConfig.from_dict({}) == RunConfig()


def test_every_failure_is_collected():
    document = {
        'encoder': {'base_channels': 0, 'spatial_kernel': 4},
        'aggregator': {'heads': 3},
        'train': {'steps': -1},
        'mask_density': 1.5,
    }
    with pytest.raises(ConfigurationError) as info:
        RunConfig.from_dict(document)
    errors = info.value.errors
    assert len(errors) == 6
    for fragment in ('base_channels', 'spatial_kernel', 'divisible by groups', 'divisible by heads',
                     'train.steps', 'mask_density'):
        assert any(fragment in e for e in errors), fragment


def test_unknown_and_mistyped_keys():
    document = {'encoder': {'depth': 3, 'base_channels': 'eight'}, 'train': {'augment_flips': 1}, 'extra': True}
    with pytest.raises(ConfigurationError) as info:
        RunConfig.from_dict(document)
    errors = info.value.errors
    assert "unknown key 'extra'" in errors
    assert "unknown key 'encoder.depth'" in errors
    assert any('encoder.base_channels' in e and 'integer' in e for e in errors)
    assert any('train.augment_flips' in e and 'boolean' in e for e in errors)


def test_non_object_documents():
    with pytest.raises(ConfigurationError):
        RunConfig.from_dict([1, 2])
    with pytest.raises(ConfigurationError, match="'decoder' must be an object"):
        RunConfig.from_dict({'decoder': 'gelu'})


def test_section_validation():
    assert EncoderConfig(fusion='max').validate() == ["encoder.fusion must be 'addition' or 'concatenation', got 'max'"]
    assert AggregatorConfig(groups=2, heads=4, model_dim=8).group_dim == 4
    assert AggregatorConfig(window=0).validate() == ['aggregator.window must be >= 1, got 0']
    assert EncoderConfig(block='dense').validate() == ["encoder.block must be 'ssdw' or 'conv3d', got 'dense'"]
    assert EncoderConfig(block='conv3d', dense_kernel=4).validate() == [
        'encoder.dense_kernel must be a positive odd integer, got 4']


def test_load_from_file(tmp_path, toy_cfg):
    path = tmp_path / 'run.json'
    path.write_text(json.dumps(toy_cfg.with_train(seed=9).to_dict()))
    cfg = RunConfig.load(str(path))
    assert cfg.train.seed == 9
    assert cfg.replace(shift_d=1).shift_d == 1


def test_malformed_file(tmp_path):
    path = tmp_path / 'broken.json'
    path.write_text('{"encoder": {"base_channels": 8,}}')
    with pytest.raises(ConfigurationError) as info:
        RunConfig.load(str(path))
    assert info.value.extra_info == str(path)
    assert info.value.errors[0].startswith('line 1 column')
