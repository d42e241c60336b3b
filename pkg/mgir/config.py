"""
Description:
Run configuration: frozen dataclasses for each pipeline stage plus the RunConfig document
that ties them together. RunConfig.from_dict rejects unknown keys and reports every
validation failure at once.
"""

import dataclasses
from dataclasses import dataclass, field

import mgir.load_env as mgir_env
from mgir.errors import ConfigurationError
from mgir.file_loader import load_json


@dataclass(frozen=True)
class EncoderConfig:
    base_channels: int = 8
    stage_depths: tuple = (2, 2, 4, 4)
    spatial_kernel: int = 5
    spectral_kernel: int = 5
    fusion: str = 'addition'
    mlp_ratio: int = 2
    # 'conv3d' swaps every SSDW block for one dense cubic convolution of side dense_kernel
    block: str = 'ssdw'
    dense_kernel: int = 3

    @property
    def stage_channels(self):
        return tuple(self.base_channels * 2 ** i for i in range(len(self.stage_depths)))

    def validate(self):
        errors = []
        if self.base_channels < 1:
            errors.append(f"encoder.base_channels must be >= 1, got {self.base_channels}")
        if len(self.stage_depths) != 4:
            errors.append(f"encoder.stage_depths needs 4 entries, got {len(self.stage_depths)}")
        if any(d < 0 for d in self.stage_depths):
            errors.append(f"encoder.stage_depths must be non-negative, got {self.stage_depths}")
        for name in ('spatial_kernel', 'spectral_kernel'):
            k = getattr(self, name)
            if k < 1 or k % 2 == 0:
                errors.append(f"encoder.{name} must be a positive odd integer, got {k}")
        if self.fusion not in ('addition', 'concatenation'):
            errors.append(f"encoder.fusion must be 'addition' or 'concatenation', got {self.fusion!r}")
        if self.mlp_ratio < 1:
            errors.append(f"encoder.mlp_ratio must be >= 1, got {self.mlp_ratio}")
        if self.block not in ('ssdw', 'conv3d'):
            errors.append(f"encoder.block must be 'ssdw' or 'conv3d', got {self.block!r}")
        if self.dense_kernel < 1 or self.dense_kernel % 2 == 0:
            errors.append(f"encoder.dense_kernel must be a positive odd integer, got {self.dense_kernel}")
        return errors


@dataclass(frozen=True)
class AggregatorConfig:
    groups: int = 4
    heads: int = 4
    window: int = 2
    model_dim: int = 64
    rpe_frequencies: int = 20
    use_rpe: bool = True
    query_fusion: str = 'addition'

    @property
    def head_dim(self):
        return self.model_dim // self.heads

    @property
    def group_dim(self):
        return self.model_dim // self.groups

    def validate(self):
        errors = []
        if self.groups < 1:
            errors.append(f"aggregator.groups must be >= 1, got {self.groups}")
        if self.heads < 1:
            errors.append(f"aggregator.heads must be >= 1, got {self.heads}")
        if self.groups >= 1 and self.heads % self.groups:
            errors.append(f"aggregator.heads ({self.heads}) must be divisible by groups ({self.groups})")
        if self.heads >= 1 and self.model_dim % self.heads:
            errors.append(f"aggregator.model_dim ({self.model_dim}) must be divisible by heads ({self.heads})")
        if self.window < 1:
            errors.append(f"aggregator.window must be >= 1, got {self.window}")
        if self.rpe_frequencies < 1:
            errors.append(f"aggregator.rpe_frequencies must be >= 1, got {self.rpe_frequencies}")
        if self.query_fusion not in ('addition', 'concatenation'):
            errors.append(f"aggregator.query_fusion must be 'addition' or 'concatenation', got {self.query_fusion!r}")
        return errors


@dataclass(frozen=True)
class DecoderConfig:
    hidden_dims: tuple = (64, 64, 64)
    activation: str = 'gelu'
    output_clamp: str = 'unit'

    def validate(self):
        errors = []
        if len(self.hidden_dims) < 1:
            errors.append("decoder.hidden_dims needs at least one hidden layer")
        if any(h < 1 for h in self.hidden_dims):
            errors.append(f"decoder.hidden_dims must be positive, got {self.hidden_dims}")
        if self.activation not in ('gelu', 'relu'):
            errors.append(f"decoder.activation must be 'gelu' or 'relu', got {self.activation!r}")
        if self.output_clamp not in ('none', 'unit'):
            errors.append(f"decoder.output_clamp must be 'none' or 'unit', got {self.output_clamp!r}")
        return errors


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 4e-4
    steps: int = 2000
    batch_scenes: int = 4
    queries_per_step: int = 4096
    seed: int = 0
    augment_flips: bool = True
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8

    def validate(self):
        errors = []
        if not self.lr >= 0:
            errors.append(f"train.lr must be non-negative, got {self.lr}")
        if self.steps < 0:
            errors.append(f"train.steps must be >= 0, got {self.steps}")
        if self.batch_scenes < 1:
            errors.append(f"train.batch_scenes must be >= 1, got {self.batch_scenes}")
        if self.queries_per_step < 1:
            errors.append(f"train.queries_per_step must be >= 1, got {self.queries_per_step}")
        if len(self.betas) != 2 or not all(0 <= b < 1 for b in self.betas):
            errors.append(f"train.betas must be two values in [0,1), got {self.betas}")
        if self.eps <= 0:
            errors.append(f"train.eps must be positive, got {self.eps}")
        return errors


_SECTIONS = {
    'encoder': EncoderConfig,
    'aggregator': AggregatorConfig,
    'decoder': DecoderConfig,
    'train': TrainConfig,
}


@dataclass(frozen=True)
class RunConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    aggregator: AggregatorConfig = field(default_factory=AggregatorConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    mask_seed: int = 7
    mask_density: float = 0.5
    shift_d: int = 2

    def validate(self):
        errors = []
        for name in _SECTIONS:
            errors.extend(getattr(self, name).validate())
        if not 0 < self.mask_density < 1:
            errors.append(f"mask_density must lie in (0,1), got {self.mask_density}")
        if self.shift_d < 0:
            errors.append(f"shift_d must be >= 0, got {self.shift_d}")
        return errors

    def to_dict(self):
        out = dataclasses.asdict(self)
        # tuples become lists so the document is plain JSON
        for section in _SECTIONS:
            for key, value in out[section].items():
                if isinstance(value, tuple):
                    out[section][key] = list(value)
        return out

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def with_train(self, **changes):
        return dataclasses.replace(self, train=dataclasses.replace(self.train, **changes))

    @staticmethod
    def from_dict(document):
        """Build and validate a RunConfig; all failures are collected into one ConfigurationError."""
        errors = []
        if not isinstance(document, dict):
            raise ConfigurationError("run configuration must be a JSON object")
        top_fields = {f.name for f in dataclasses.fields(RunConfig)}
        for key in document:
            if key not in top_fields:
                errors.append(f"unknown key '{key}'")

        kwargs = {}
        for name, cls in _SECTIONS.items():
            section = document.get(name, {})
            if not isinstance(section, dict):
                errors.append(f"'{name}' must be an object")
                continue
            known = {f.name: f for f in dataclasses.fields(cls)}
            values = {}
            for key, value in section.items():
                if key not in known:
                    errors.append(f"unknown key '{name}.{key}'")
                    continue
                values[key] = _coerce(f"{name}.{key}", known[key].default, value, errors)
            kwargs[name] = cls(**values)

        for key in ('mask_seed', 'mask_density', 'shift_d'):
            if key in document:
                default = next(f.default for f in dataclasses.fields(RunConfig) if f.name == key)
                kwargs[key] = _coerce(key, default, document[key], errors)

        if errors:
            raise ConfigurationError("invalid run configuration", errors)
        cfg = RunConfig(**kwargs)
        errors = cfg.validate()
        if errors:
            raise ConfigurationError("invalid run configuration", errors)
        return cfg

    @staticmethod
    def load(path):
        return RunConfig.from_dict(load_json(path))

    @staticmethod
    def preset(name):
        if name not in mgir_env.presets:
            raise ConfigurationError(f"unknown preset '{name}'", [f"known presets: {sorted(mgir_env.presets)}"])
        return RunConfig.from_dict(mgir_env.presets[name])


def _coerce(key, default, value, errors):
    # match the JSON value to the type of the field default
    if isinstance(default, bool):
        if not isinstance(value, bool):
            errors.append(f"'{key}' must be a boolean, got {value!r}")
            return default
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            errors.append(f"'{key}' must be an integer, got {value!r}")
            return default
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            errors.append(f"'{key}' must be a number, got {value!r}")
            return default
        return float(value)
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            errors.append(f"'{key}' must be a list, got {value!r}")
            return default
        return tuple(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            errors.append(f"'{key}' must be a string, got {value!r}")
            return default
        return value
    return value
