"""
Description:
Command-line entry point.

    mgir synth        --bands B --height H --width W --out scene.hsc
    mgir simulate     --scene scene.hsc --mask-seed 7 --shift 2 --out meas.hsc   (mask -> meas.mask.hsc)
    mgir train        --scene scene.hsc --preset toy --out run.ckpt [--steps N] [--resume run.ckpt] [--log metrics.txt]
    mgir reconstruct  --checkpoint run.ckpt --measurement meas.hsc --bands B --height H --width W --out recon.hsc
    mgir eval         --pred recon.hsc --truth scene.hsc [--json report.json] [--ssim-sigma S]
    mgir flops        --preset toy --dims D H W

Every command exits 0 on success and 1 on any pipeline or file error.
"""

import argparse
import json
import os
import sys

import mgir.load_env as mgir_env
from mgir.config import RunConfig
from mgir.errors import ConfigurationError, DimensionError, MgirError
from mgir.io.checkpoint import load_checkpoint, restore_state, save_checkpoint
from mgir.io.hsc import atomic_write, read_hsc, write_hsc, write_hsc_all
from mgir.model import encoder
from mgir.model.decoder import ReconstructionRequest, reconstruct_values
from mgir.model.network import build_parameter_store
from mgir.model.params import count_params
from mgir.optics.cassi import HyperCube, Measurement, make_mask, simulate
from mgir.optics.scene import synthetic_scene
from mgir.tensor.tensor import Tensor
from mgir.train.metrics import SSIM_SIGMA, evaluate, fit_ssim_window, ssim_window
from mgir.train.trainer import fit, init_state

logger = mgir_env.logger


def mask_path(out):
    return os.path.splitext(out)[0] + '.mask.hsc'


def _read_cube(path, wavelength_range=(400.0, 700.0)):
    array = read_hsc(path)
    if array.ndim != 3:
        raise DimensionError(f"{path} holds a rank-{array.ndim} tensor, expected a [D,H,W] cube")
    return HyperCube.from_array(array, wavelength_range)


def _run_config(args):
    if getattr(args, 'config', None):
        cfg = RunConfig.load(args.config)
    else:
        cfg = RunConfig.preset(args.preset)
    if getattr(args, 'seed', None) is not None:
        cfg = cfg.with_train(seed=args.seed)
    return cfg


def cmd_synth(args):
    cube = synthetic_scene(args.bands, args.height, args.width, blobs=args.blobs, seed=args.seed)
    write_hsc(args.out, cube.data.data)
    print(f"wrote {args.out} {list(cube.shape)}")


def cmd_simulate(args):
    cube = _read_cube(args.scene)
    _, height, width = cube.shape
    mask = make_mask(height, width, density=args.density, seed=args.mask_seed)
    meas = simulate(cube, mask, args.shift)
    # the mask lands first so a measurement never appears without it
    write_hsc_all([(mask_path(args.out), mask.data.data), (args.out, meas.data.data)])
    print(f"wrote {args.out} {list(meas.data.shape)} and {mask_path(args.out)}")


def cmd_train(args):
    cfg = _run_config(args)
    scenes = [_read_cube(path) for path in args.scene]
    steps = cfg.train.steps if args.steps is None else args.steps
    if args.resume:
        ckpt = load_checkpoint(args.resume)
        cfg = ckpt.run_cfg
        state = restore_state(init_state(scenes, cfg, params=ckpt.params), ckpt)
    else:
        state = init_state(scenes, cfg)
    fit(scenes, cfg, steps=steps, state=state, metrics_log=args.log)
    save_checkpoint(args.out, state, cfg)
    last = f" loss {state.losses[-1]:.6f}" if state.losses else ''
    print(f"wrote {args.out} at step {state.step}{last}")


def cmd_reconstruct(args):
    ckpt = load_checkpoint(args.checkpoint)
    cfg = ckpt.run_cfg
    array = read_hsc(args.measurement)
    if array.ndim != 2:
        raise DimensionError(f"{args.measurement} holds a rank-{array.ndim} tensor, expected a 2D measurement")
    meas = Measurement(Tensor(array), cfg.shift_d, ckpt.bands)
    req = ReconstructionRequest(args.bands or ckpt.bands,
                                args.height or array.shape[0],
                                args.width or meas.scene_width,
                                tuple(args.wavelength_range))
    values = reconstruct_values(meas, ckpt.params, cfg, req, voxel_budget=args.voxel_budget)
    write_hsc(args.out, values)
    print(f"wrote {args.out} {list(values.shape)}")


def cmd_eval(args):
    pred, truth = read_hsc(args.pred), read_hsc(args.truth)
    if pred.shape != truth.shape:
        raise DimensionError(f"prediction {args.pred} has shape {pred.shape}, truth {args.truth} has shape {truth.shape}")
    if pred.ndim != 3:
        raise DimensionError(f"{args.pred} holds a rank-{pred.ndim} tensor, expected a [D,H,W] cube")
    height, width = pred.shape[-2:]
    if args.ssim_sigma is not None:
        window, sigma = ssim_window(args.ssim_sigma), args.ssim_sigma
    else:
        window, sigma = fit_ssim_window(height, width)
        if sigma != SSIM_SIGMA:
            logger.info(f"SSIM window shrunk to {window} (sigma {sigma:g}) for {height}x{width} images")
    report = evaluate(pred, truth, window=window, sigma=sigma)
    document = json.dumps(report.to_dict(), sort_keys=True)
    print(report.table())
    print(document)
    if args.json:
        atomic_write(args.json, (document + '\n').encode('utf-8'))


def cmd_flops(args):
    cfg = _run_config(args)
    d, h, w = args.dims
    c, m = cfg.encoder.base_channels, cfg.encoder.spatial_kernel
    kernels = {'W-MSA': m, 'G-MSA': m, 'SSDW': m, 'Conv3D': cfg.encoder.dense_kernel}
    for kind, kernel in kernels.items():
        print(f"{kind:<6} {encoder.flops(kind, h, w, d, c, kernel):>16,d}")
    print(f"{'params':<6} {count_params(build_parameter_store(cfg)):>16,d}")


def build_parser():
    parser = argparse.ArgumentParser(prog='mgir', description='Snapshot hyperspectral reconstruction with a '
                                     'mixed-granularity implicit representation',
                                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    commands = parser.add_subparsers(dest='command', required=True)

    def command(name, handler, help_text):
        p = commands.add_parser(name, help=help_text, formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        p.set_defaults(handler=handler)
        return p

    def config_arguments(p):
        group = p.add_mutually_exclusive_group()
        group.add_argument('--config', type=str, help='Run configuration JSON file')
        group.add_argument('--preset', type=str, default='toy', help='Named preset from env/presets.json')

    p = command('synth', cmd_synth, 'Write a synthetic Gaussian-blob scene')
    p.add_argument('--bands', type=int, default=8)
    p.add_argument('--height', type=int, default=32)
    p.add_argument('--width', type=int, default=32)
    p.add_argument('--blobs', type=int, default=4)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out', type=str, required=True)

    p = command('simulate', cmd_simulate, 'Simulate a CASSI measurement of a scene')
    p.add_argument('--scene', type=str, required=True)
    p.add_argument('--mask-seed', dest='mask_seed', type=int, default=7)
    p.add_argument('--density', type=float, default=0.5)
    p.add_argument('--shift', type=int, default=2)
    p.add_argument('--out', type=str, required=True)

    p = command('train', cmd_train, 'Train on one or more scenes and write a checkpoint')
    p.add_argument('--scene', type=str, nargs='+', required=True)
    config_arguments(p)
    p.add_argument('--steps', type=int, default=None, help='Steps to run, default from the config')
    p.add_argument('--seed', type=int, default=None, help='Override train.seed')
    p.add_argument('--resume', type=str, default=None, help='Checkpoint to continue from')
    p.add_argument('--log', type=str, default=None, help='Plain-text metrics log, one line per step')
    p.add_argument('--out', type=str, required=True)

    p = command('reconstruct', cmd_reconstruct, 'Reconstruct a cube at any band count and resolution')
    p.add_argument('--checkpoint', type=str, required=True)
    p.add_argument('--measurement', type=str, required=True)
    p.add_argument('--bands', type=int, default=None, help='Default: training band count')
    p.add_argument('--height', type=int, default=None, help='Default: measurement height')
    p.add_argument('--width', type=int, default=None, help='Default: scene width of the measurement')
    p.add_argument('--wavelength-range', dest='wavelength_range', type=float, nargs=2, default=[400.0, 700.0],
                   metavar=('LOW', 'HIGH'))
    p.add_argument('--voxel-budget', dest='voxel_budget', type=int, default=None,
                   help='Default: RUNTIME VOXEL_BUDGET of the environment config')
    p.add_argument('--out', type=str, required=True)

    p = command('eval', cmd_eval, 'Print RMSE, PSNR, SSIM and SAM of a prediction')
    p.add_argument('--pred', type=str, required=True)
    p.add_argument('--truth', type=str, required=True)
    p.add_argument('--json', type=str, default=None, help='Also write the JSON report here')
    p.add_argument('--ssim-sigma', dest='ssim_sigma', type=float, default=None,
                   help='Gaussian sigma of the SSIM window; the window is 2*int(3.5*sigma+0.5)+1. '
                        'Default: 1.5, shrunk to fit images smaller than 11x11')

    p = command('flops', cmd_flops, 'Closed-form block costs and the parameter count')
    config_arguments(p)
    p.add_argument('--dims', type=int, nargs=3, required=True, metavar=('D', 'H', 'W'))
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.handler(args)
    except ConfigurationError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        for line in e.errors:
            print(f"  - {line}", file=sys.stderr)
        return 1
    except MgirError as e:
        logger.error(f"{args.command} failed: {e}")
        where = f" [{e.extra_info}]" if e.extra_info else ''
        print(f"error: {e}{where}", file=sys.stderr)
        return 1
    except OSError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0
