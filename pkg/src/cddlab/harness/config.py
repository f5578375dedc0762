"""Run configuration: one object that pins everything a run needs.

Serializes to flat `section.key=value` text; the digest is taken over the
sorted lines, so it is stable under reordering.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from ..cdd import CddSchedules, STRATEGIES
from ..datagen import GenSpec, SETTINGS
from ..errors import ConfigurationError
from ..models import ModelConfig
from ..serialize import canonical_text, digest_of, flatten

ALGORITHMS = ("rd", "cdd")


@dataclass
class RunConfig:
    gen: GenSpec = field(default_factory=GenSpec)
    model: ModelConfig = field(default_factory=ModelConfig)
    schedules: CddSchedules = field(default_factory=CddSchedules)
    r_noise: float = 0.1
    setting: str = "both"  # evaluation settings to report
    algorithm: str = "cdd"
    strategy: str = "consensual"
    learning_rate: float = 0.005
    batch_size: int = 8
    smooth_sigma: float = 1.0  # map-smoothing sigma scaled to 32x32 images
    domain_steps: int = 0  # 0 -> one full pass per phase
    cross_steps: int = 0
    hc_steps: int = 0
    data_seed: int = 0
    model_seed: int = 0
    train_seed: int = 0

    def __post_init__(self):
        if not 0 <= self.r_noise < 0.5:
            raise ConfigurationError(f"r_noise: must be in [0, 0.5), got {self.r_noise}")
        if self.setting not in SETTINGS + ("both",):
            raise ConfigurationError(f"setting: unknown value {self.setting!r}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(f"algorithm: unknown value {self.algorithm!r}")
        if self.strategy not in STRATEGIES:
            raise ConfigurationError(f"strategy: unknown value {self.strategy!r}")
        if self.learning_rate <= 0:
            raise ConfigurationError(f"learning_rate: must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size: must be >= 1, got {self.batch_size}")
        if self.gen.image_size != self.model.image_size:
            raise ConfigurationError(
                f"model.image_size: {self.model.image_size} does not match "
                f"gen.image_size {self.gen.image_size}")

    def settings_to_eval(self):
        return list(SETTINGS) if self.setting == "both" else [self.setting]

    def to_text(self) -> str:
        return canonical_text(flatten(self))

    def digest(self) -> str:
        return digest_of(self)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        flat = parse_kv_text(text)
        return cls.from_flat(flat)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_text(Path(path).read_text())

    @classmethod
    def from_flat(cls, flat: dict) -> "RunConfig":
        known = set(flatten(cls()))
        unknown = set(flat) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for f in fields(cls):
            if f.name == "gen":
                kwargs["gen"] = _build(GenSpec, flat, "gen.")
            elif f.name == "model":
                kwargs["model"] = _build(ModelConfig, flat, "model.")
            elif f.name == "schedules":
                kwargs["schedules"] = _build(CddSchedules, flat, "schedules.")
            elif f.name in _RUN_PARSERS and f.name in flat:
                kwargs[f.name] = _parse_value(f.name, _RUN_PARSERS[f.name], flat[f.name])
        return cls(**kwargs)


# ---------------------------------------------------------------------------
# parsing

def parse_kv_text(text: str) -> dict:
    flat = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigurationError(f"config line {lineno}: expected key=value, got {raw!r}")
        k, v = line.split("=", 1)
        flat[k.strip()] = v.strip()
    return flat


def _int_tuple(s):
    return tuple(int(x) for x in s.split(",") if x != "")


def _str_tuple(s):
    return tuple(x for x in s.split(",") if x != "")


def _k_schedule(s):
    vals = [x for x in s.split(",") if x != ""]
    if len(vals) % 2:
        raise ConfigurationError(f"schedules.k_schedule: expected fraction,K pairs, got {s!r}")
    return tuple((float(vals[i]), int(vals[i + 1])) for i in range(0, len(vals), 2))


_GEN_PARSERS = {
    "image_size": int, "channels": int, "pattern_family": str, "jitter": float,
    "defect_size": _int_tuple, "defect_contrast": float, "defect_shapes": _str_tuple,
    "n_train_normal": int, "n_test_normal": int, "n_anomalous_pool": int, "seed": int,
}
_MODEL_PARSERS = {
    "image_size": int, "in_channels": int, "level_channels": _int_tuple,
    "level_strides": _int_tuple, "nonlinearity": str, "bottleneck_width": int, "dtype": str,
}
_SCHED_PARSERS = {
    "E": int, "r_normal": float, "p": float, "sigma_noise": float,
    "k_schedule": _k_schedule, "lambda_mode": str,
}
_RUN_PARSERS = {
    "r_noise": float, "setting": str, "algorithm": str, "strategy": str,
    "learning_rate": float, "batch_size": int, "smooth_sigma": float,
    "domain_steps": int, "cross_steps": int, "hc_steps": int,
    "data_seed": int, "model_seed": int, "train_seed": int,
}
_PARSERS_BY_CLS = {GenSpec: _GEN_PARSERS, ModelConfig: _MODEL_PARSERS,
                   CddSchedules: _SCHED_PARSERS}


def _parse_value(key: str, parser, value: str):
    try:
        return parser(value)
    except (ValueError, TypeError) as err:
        raise ConfigurationError(f"{key}: cannot parse {value!r} ({err})") from err


def _build(cls, flat: dict, prefix: str):
    parsers = _PARSERS_BY_CLS[cls]
    kwargs = {}
    for key, value in flat.items():
        if key.startswith(prefix):
            name = key[len(prefix):]
            if name not in parsers:
                raise ConfigurationError(f"{key}: unknown config key")
            kwargs[name] = _parse_value(key, parsers[name], value)
    return cls(**kwargs)


def build_genspec(flat: dict) -> GenSpec:
    """GenSpec from bare or `gen.`-prefixed keys."""
    if any(k.startswith("gen.") for k in flat):
        return _build(GenSpec, flat, "gen.")
    return _build(GenSpec, {f"gen.{k}": v for k, v in flat.items()}, "gen.")


def set_config_field(config: RunConfig, dotted_key: str, value) -> RunConfig:
    """Functional single-field override, e.g. ('schedules.r_normal', 0.3)."""
    if isinstance(value, str):
        value = _parse_value(dotted_key, _parser_for(dotted_key), value)
    if "." in dotted_key:
        section, name = dotted_key.split(".", 1)
        sub = getattr(config, section)
        return replace(config, **{section: replace(sub, **{name: value})})
    return replace(config, **{dotted_key: value})


def _parser_for(dotted_key: str):
    if "." in dotted_key:
        section, name = dotted_key.split(".", 1)
        table = {"gen": _GEN_PARSERS, "model": _MODEL_PARSERS, "schedules": _SCHED_PARSERS}
        if section not in table or name not in table[section]:
            raise ConfigurationError(f"{dotted_key}: unknown config key")
        return table[section][name]
    if dotted_key not in _RUN_PARSERS:
        raise ConfigurationError(f"{dotted_key}: unknown config key")
    return _RUN_PARSERS[dotted_key]
