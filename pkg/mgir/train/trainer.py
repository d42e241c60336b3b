"""
Description:
Coordinate-sampled supervised training.

Each step draws scenes and random cell-center coordinates of their ground-truth cubes,
optionally on a flipped copy, predicts those intensities from the CASSI measurement of the
(flipped) scene and takes one Adam step on the RMSE loss.

Randomness of step s comes from SeedSequence([seed, s]) only, so a run resumed from a
checkpoint at step k follows the same trajectory as an uninterrupted run.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

import mgir.load_env as mgir_env
from mgir.errors import DimensionError, NonFiniteError, ParameterError, TrainingAbortedError
from mgir.model import decoder, encoder
from mgir.model.network import build_parameter_store
from mgir.optics.cassi import HyperCube, lift_measurement, make_mask, simulate
from mgir.tensor import ops
from mgir.tensor.optim import Adam
from mgir.tensor.tensor import Tape, Tensor, backward
from mgir.train.metrics import rmse_loss

logger = mgir_env.logger

# (vertical, horizontal) flip flags
FLIPS = tuple(itertools.product((False, True), repeat=2))


@dataclass
class TrainState:
    params: object
    optimizer: Adam
    mask: object
    # per scene: {(vertical, horizontal): (truth array [D,H,W], lifted measurement [1,D,H,W])}
    variants: list
    seed: int = 0
    step: int = 0
    losses: list = field(default_factory=list)

    @property
    def bands(self):
        return self.variants[0][(False, False)][0].shape[0]


def flip_array(array, vertical, horizontal):
    if vertical:
        array = array[:, ::-1, :]
    if horizontal:
        array = array[:, :, ::-1]
    return np.ascontiguousarray(array)


def draw_flips(rng):
    vertical = bool(rng.random() < 0.5)
    horizontal = bool(rng.random() < 0.5)
    return vertical, horizontal


def augment_flip(cube, rng):
    """Independent 50% vertical and horizontal spatial flips; the spectral axis is untouched."""
    vertical, horizontal = draw_flips(rng)
    return HyperCube(Tensor(flip_array(cube.data.data, vertical, horizontal)), cube.wavelengths)


def init_state(scenes, run_cfg, params=None):
    if not scenes:
        raise ParameterError("training needs at least one scene")
    shape = scenes[0].shape
    for cube in scenes[1:]:
        if cube.shape != shape:
            raise DimensionError(f"all training scenes must share one shape, got {shape} and {cube.shape}")
    _, height, width = shape
    mask = make_mask(height, width, run_cfg.mask_density, run_cfg.mask_seed)

    variants = []
    for cube in scenes:
        flipped = {}
        for vertical, horizontal in FLIPS:
            truth = flip_array(cube.data.data, vertical, horizontal)
            meas = simulate(HyperCube(Tensor(truth), cube.wavelengths), mask, run_cfg.shift_d)
            flipped[(vertical, horizontal)] = (truth, lift_measurement(meas))
        variants.append(flipped)

    if params is None:
        params = build_parameter_store(run_cfg)
    train = run_cfg.train
    optimizer = Adam(train.lr, train.betas, train.eps)
    logger.info(f"Training state ready: {len(scenes)} scene(s) of shape {shape}, {params.count()} parameters")
    return TrainState(params, optimizer, mask, variants, seed=train.seed)


def step_rng(seed, step):
    return np.random.default_rng(np.random.SeedSequence([seed, step]))


def _sample(truth, count, rng):
    """count random cell centers of truth: coordinates [count,3] and values [count,1]."""
    extents = np.array(truth.shape)
    flat = rng.integers(0, truth.size, size=count)
    index = np.stack(np.unravel_index(flat, truth.shape), axis=1)
    coords = -1.0 + (2.0 * index + 1.0) / extents
    return coords, truth.reshape(-1)[flat][:, None]


def train_step(scene, state, run_cfg):
    """
    One optimization step. scene is a scene index, a list of indices, or None to draw
    min(batch_scenes, n) distinct scenes. Returns the loss value.
    """
    train = run_cfg.train
    rng = step_rng(state.seed, state.step)
    n = len(state.variants)
    if scene is None:
        chosen = rng.choice(n, size=min(train.batch_scenes, n), replace=False).tolist()
    else:
        chosen = [scene] if isinstance(scene, int) else list(scene)
    counts = [train.queries_per_step // len(chosen)] * len(chosen)
    for i in range(train.queries_per_step % len(chosen)):
        counts[i] += 1

    params = state.params
    leaves = [tensor for _, tensor in params.items()]
    for tensor in leaves:
        tensor.grad = None
    try:
        with Tape():
            preds, truths = [], []
            for index, count in zip(chosen, counts):
                flips = draw_flips(rng) if train.augment_flips else (False, False)
                truth, m0 = state.variants[index][flips]
                coords, values = _sample(truth, count, rng)
                pyramid = encoder.encode(m0, params, run_cfg.encoder)
                preds.append(decoder.predict(pyramid, Tensor(coords), params, run_cfg))
                truths.append(values)
            pred = preds[0] if len(preds) == 1 else ops.concat(preds, axis=0)
            loss = rmse_loss(pred, Tensor(np.concatenate(truths)))
            value = loss.item()
            if not np.isfinite(value):
                raise NonFiniteError(f"loss is {value}")
            backward(loss, leaves=leaves)
    except NonFiniteError as e:
        logger.error(f"Training aborted at step {state.step}: {e}")
        raise TrainingAbortedError(f"non-finite value at step {state.step} on scenes {chosen}: {e}")

    state.optimizer.step(params)
    state.step += 1
    state.losses.append(value)
    return value


def fit(scenes, run_cfg, steps=None, state=None, metrics_log=None):
    """
    Run steps training steps (default run_cfg.train.steps). metrics_log, when given, is a
    path that receives one 'step=<n> loss=<value> lr=<lr>' line per step.
    """
    if state is None:
        state = init_state(scenes, run_cfg)
    steps = run_cfg.train.steps if steps is None else steps
    if steps < 0:
        raise ParameterError(f"steps must be >= 0, got {steps}")
    log_every = mgir_env.config.getint('TRAIN', 'LOG_EVERY', fallback=100)
    lr = state.optimizer.lr

    log = open(metrics_log, 'a', encoding='utf-8') if metrics_log else None
    try:
        for _ in range(steps):
            loss = train_step(None, state, run_cfg)
            if log:
                log.write(format_metrics_line(state.step, loss, lr))
            if state.step % log_every == 0:
                logger.info(f"step {state.step}: loss {loss:.6f}")
    finally:
        if log:
            log.close()
    return state


def format_metrics_line(step, loss, lr):
    return "step=%d loss=%.6f lr=%g\n" % (step, loss, lr)
