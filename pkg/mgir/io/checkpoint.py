"""
Description:
Training checkpoints as an uncompressed zip archive:

    config.json           the full RunConfig document
    state.json            step, seed, bands, shift_d and the Adam timestep
    params/<name>.hsc     one HSC1 member per parameter tensor
    adam_m/<name>.hsc     Adam first moments
    adam_v/<name>.hsc     Adam second moments

Members are written in parameter registration order with a fixed timestamp, so saving the
same state twice gives byte-identical archives.
"""

import io
import json
import zipfile
from collections import OrderedDict
from dataclasses import dataclass

import mgir.load_env as mgir_env
from mgir.config import RunConfig
from mgir.errors import FormatError
from mgir.io.hsc import atomic_write, decode_hsc, encode_hsc
from mgir.model.network import build_parameter_store

logger = mgir_env.logger

_TIMESTAMP = (1980, 1, 1, 0, 0, 0)


@dataclass
class Checkpoint:
    run_cfg: RunConfig
    params: object
    step: int
    seed: int
    bands: int
    adam: dict


def _member(archive, name, data):
    info = zipfile.ZipInfo(name, date_time=_TIMESTAMP)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    archive.writestr(info, data)


def _json_bytes(document):
    return (json.dumps(document, indent=2, sort_keys=True) + '\n').encode('utf-8')


def save_checkpoint(path, state, run_cfg):
    adam = state.optimizer.state_dict()
    status = {'step': state.step, 'seed': state.seed, 'bands': state.bands,
              'shift_d': run_cfg.shift_d, 'adam_t': adam['t']}
    buffer = io.BytesIO()
    with zipfile.ZipFile(buffer, 'w', zipfile.ZIP_STORED) as archive:
        _member(archive, 'config.json', _json_bytes(run_cfg.to_dict()))
        _member(archive, 'state.json', _json_bytes(status))
        for name, tensor in state.params.items():
            _member(archive, f"params/{name}.hsc", encode_hsc(tensor.data))
        for name in state.params.names():
            if name in adam['m']:
                _member(archive, f"adam_m/{name}.hsc", encode_hsc(adam['m'][name]))
                _member(archive, f"adam_v/{name}.hsc", encode_hsc(adam['v'][name]))
    atomic_write(path, buffer.getvalue())
    logger.info(f"Saved checkpoint at step {state.step} to {path}")


def _group(archive, prefix):
    out = OrderedDict()
    for name in archive.namelist():
        if name.startswith(prefix + '/') and name.endswith('.hsc'):
            out[name[len(prefix) + 1:-len('.hsc')]] = decode_hsc(archive.read(name))
    return out


def load_checkpoint(path):
    try:
        with zipfile.ZipFile(path, 'r') as archive:
            names = set(archive.namelist())
            for required in ('config.json', 'state.json'):
                if required not in names:
                    raise FormatError(f"checkpoint {path} has no {required}")
            run_cfg = RunConfig.from_dict(json.loads(archive.read('config.json')))
            status = json.loads(archive.read('state.json'))
            values = _group(archive, 'params')
            adam = {'t': status['adam_t'], 'm': _group(archive, 'adam_m'), 'v': _group(archive, 'adam_v')}
    except zipfile.BadZipFile as e:
        logger.error(f"Checkpoint {path} is not a zip archive: {e}")
        raise FormatError(f"checkpoint {path} is not a valid archive: {e}", extra_info=str(path))

    params = build_parameter_store(run_cfg)
    params.load_state_dict(values)
    logger.info(f"Loaded checkpoint {path} at step {status['step']}")
    return Checkpoint(run_cfg, params, int(status['step']), int(status['seed']), int(status['bands']), adam)


def restore_state(state, ckpt):
    """Copy parameters, optimizer moments and the step counter of a checkpoint into state."""
    state.params.load_state_dict(ckpt.params.state_dict())
    state.optimizer.load_state_dict(ckpt.adam)
    state.step = ckpt.step
    state.seed = ckpt.seed
    return state
