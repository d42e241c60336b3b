"""
Description:
Parameter construction for the full encoder -> aggregator -> decoder network.
"""

import numpy as np

import mgir.load_env as mgir_env
from mgir.errors import ConfigurationError
from mgir.model.aggregator import init_aggregator
from mgir.model.decoder import init_decoder
from mgir.model.encoder import init_encoder
from mgir.model.params import ParameterStore

logger = mgir_env.logger


def build_parameter_store(run_cfg, seed=None):
    """Initialize every parameter from one seeded generator, in a fixed registration order."""
    errors = run_cfg.validate()
    levels = len(run_cfg.encoder.stage_depths)
    if run_cfg.aggregator.groups > levels:
        errors.append(f"aggregator.groups ({run_cfg.aggregator.groups}) exceeds the {levels} pyramid levels")
    if errors:
        raise ConfigurationError("invalid run configuration", errors)

    seed = run_cfg.train.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    store = ParameterStore()
    init_encoder(store, run_cfg.encoder, rng)
    init_aggregator(store, run_cfg.aggregator, run_cfg.encoder.stage_channels, rng)
    init_decoder(store, run_cfg.decoder, run_cfg.aggregator.model_dim, rng)
    logger.debug(f"Initialized {len(store)} parameter tensors ({store.count()} values) from seed {seed}")
    return store
