"""
Description:
Reconstruction quality metrics over [D,H,W] cubes and the differentiable RMSE training loss.

psnr and ssim delegate to scikit-image; ssim is computed band by band and averaged.
sam is the mean per-pixel angle between spectra, skipping pixels where either spectrum is zero.
"""

import math
from dataclasses import asdict, dataclass

import numpy as np
from skimage.metrics import peak_signal_noise_ratio, structural_similarity

from mgir.errors import DimensionError, EmptyAxisError, ParameterError, UndefinedMetricError
from mgir.optics.cassi import HyperCube
from mgir.tensor import ops
from mgir.tensor.tensor import Tensor

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
# scikit-image sizes Gaussian windows as 2 * int(truncate * sigma + 0.5) + 1
_GAUSSIAN_TRUNCATE = 3.5


def _array(x):
    if isinstance(x, HyperCube):
        x = x.data
    if isinstance(x, Tensor):
        x = x.data
    return np.asarray(x, dtype=np.float64)


def _pair(pred, truth):
    pred, truth = _array(pred), _array(truth)
    if pred.shape != truth.shape:
        raise DimensionError(f"prediction shape {pred.shape} does not match truth shape {truth.shape}")
    return pred, truth


def rmse_loss(pred, truth):
    """sqrt(mean((pred - truth)^2)) on the tape."""
    if pred.shape != truth.shape:
        raise DimensionError(f"prediction shape {pred.shape} does not match truth shape {truth.shape}")
    if pred.size == 0:
        raise EmptyAxisError("rmse_loss needs at least one sample", axis=0)
    diff = ops.sub(pred, truth)
    return ops.sqrt(ops.mean(ops.mul(diff, diff)))


def rmse(pred, truth):
    pred, truth = _pair(pred, truth)
    if pred.size == 0:
        raise EmptyAxisError("rmse needs at least one sample", axis=0)
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def psnr(pred, truth, peak=1.0):
    """10 log10(peak^2 / MSE) in dB; identical inputs give +inf."""
    if peak <= 0:
        raise ParameterError(f"psnr peak must be positive, got {peak}")
    pred, truth = _pair(pred, truth)
    if np.mean((pred - truth) ** 2) == 0:
        return math.inf
    return float(peak_signal_noise_ratio(truth, pred, data_range=peak))


def ssim_window(sigma):
    return 2 * int(_GAUSSIAN_TRUNCATE * sigma + 0.5) + 1


def fit_ssim_window(height, width, sigma=SSIM_SIGMA):
    """
    (window, sigma) for images of the given extents. The Gaussian support of sigma is kept when it
    fits; otherwise the window becomes the largest odd size r*2+1 <= min(height, width) and sigma
    becomes r/3.5, whose Gaussian support is exactly that window.
    """
    window = ssim_window(sigma)
    if window <= min(height, width):
        return window, sigma
    radius = (min(height, width) - 1) // 2
    if radius < 1:
        raise DimensionError(f"ssim needs images of at least 3x3, got {height}x{width}")
    return 2 * radius + 1, radius / _GAUSSIAN_TRUNCATE


def ssim(pred, truth, window=SSIM_WINDOW, sigma=SSIM_SIGMA, k1=SSIM_K1, k2=SSIM_K2, peak=1.0):
    """Gaussian-windowed SSIM per band, averaged over bands. Inputs are [D,H,W] or [H,W]."""
    pred, truth = _pair(pred, truth)
    if window < 1 or window % 2 == 0:
        raise ParameterError(f"ssim window must be a positive odd integer, got {window}")
    if window != ssim_window(sigma):
        raise ParameterError(f"ssim window {window} does not match the Gaussian support "
                             f"{ssim_window(sigma)} of sigma {sigma}")
    if pred.ndim == 2:
        pred, truth = pred[None], truth[None]
    if pred.ndim != 3:
        raise DimensionError(f"ssim needs [D,H,W] or [H,W] inputs, got {pred.shape}")
    if min(pred.shape[1:]) < window:
        raise DimensionError(f"ssim window {window} is larger than the {pred.shape[1]}x{pred.shape[2]} image")
    values = [structural_similarity(t, p, win_size=window, gaussian_weights=True, sigma=sigma,
                                    K1=k1, K2=k2, data_range=peak, use_sample_covariance=False)
              for p, t in zip(pred, truth)]
    return float(np.mean(values))


def sam(pred, truth):
    """Mean spectral angle in radians over pixels of [D,H,W] cubes."""
    pred, truth = _pair(pred, truth)
    if pred.ndim != 3:
        raise DimensionError(f"sam needs [D,H,W] cubes, got {pred.shape}")
    p = pred.reshape(pred.shape[0], -1)
    t = truth.reshape(truth.shape[0], -1)
    norms = np.linalg.norm(p, axis=0) * np.linalg.norm(t, axis=0)
    valid = norms > 0
    if not np.any(valid):
        raise UndefinedMetricError("spectral angle is undefined: every pixel has a zero spectrum")
    cosine = np.sum(p[:, valid] * t[:, valid], axis=0) / norms[valid]
    return float(np.mean(np.arccos(np.clip(cosine, -1.0, 1.0))))


@dataclass(frozen=True)
class MetricReport:
    rmse: float
    psnr_db: float
    ssim: float
    sam_rad: float

    def to_dict(self):
        out = asdict(self)
        # JSON has no infinity literal
        if math.isinf(out['psnr_db']):
            out['psnr_db'] = 'inf'
        return out

    def table(self):
        # repr keeps every digit so the table and the JSON document carry the same floats
        rows = [('RMSE', self.rmse), ('PSNR (dB)', self.psnr_db), ('SSIM', self.ssim), ('SAM (rad)', self.sam_rad)]
        return '\n'.join(f"{name:<10} {'inf' if math.isinf(value) else repr(value):>22}" for name, value in rows)


def evaluate(pred, truth, peak=1.0, window=SSIM_WINDOW, sigma=SSIM_SIGMA, k1=SSIM_K1, k2=SSIM_K2):
    return MetricReport(rmse=rmse(pred, truth),
                        psnr_db=psnr(pred, truth, peak),
                        ssim=ssim(pred, truth, window, sigma, k1, k2, peak),
                        sam_rad=sam(pred, truth))
