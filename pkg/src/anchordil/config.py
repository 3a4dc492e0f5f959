"""Experiment configuration: a single JSON file, validated up front.

Unknown keys are rejected with their field path; command-line overrides
(`--set a.b=value`) are applied on top of the file before validation.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .alignment import LossConfig
from .autodiff import ConfigurationError
from .backbone import BackboneConfig
from .datagen import BenchmarkConfig
from .training import OptimizerConfig

ID_STRATEGIES = ("MLFI", "NMC", "KNN", "PSS", "oracle")


@dataclass
class ExperimentConfig:
    benchmark: BenchmarkConfig = field(default_factory=BenchmarkConfig)
    backbone: BackboneConfig = field(default_factory=lambda: BackboneConfig(
        depth=4, hidden_dim=32, heads=2, patch_count=16, token_dim=64))
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    share_mode: bool = False
    use_aggregation: bool = True
    mlfi_layers: list[int] | str = "search"
    id_strategy: str = "MLFI"
    knn_k: int = 5
    domain_order: list[int] | None = None
    seed: int = 0
    output_dir: str = "out"

    def __post_init__(self):
        if self.id_strategy not in ID_STRATEGIES:
            raise ConfigurationError(
                f"id_strategy: must be one of {ID_STRATEGIES}, "
                f"got {self.id_strategy!r}")
        if isinstance(self.mlfi_layers, str) and self.mlfi_layers != "search":
            raise ConfigurationError(
                "mlfi_layers: must be a list of layer indices or 'search'")
        self.backbone.patch_count = self.benchmark.patch_count
        self.backbone.token_dim = self.benchmark.token_dim


_SECTIONS = {
    "benchmark": BenchmarkConfig,
    "backbone": BackboneConfig,
    "optimizer": OptimizerConfig,
    "loss": LossConfig,
}


def _build_section(cls, data: dict, path: str):
    known = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigurationError(f"unknown key {path}.{key}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"{path}: {e}") from e


def config_from_dict(data: dict) -> ExperimentConfig:
    top_known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    for key in data:
        if key not in top_known:
            raise ConfigurationError(f"unknown key {key}")
    kwargs = {}
    for name, cls in _SECTIONS.items():
        if name in data:
            kwargs[name] = _build_section(cls, dict(data[name]), name)
    for name in top_known - set(_SECTIONS):
        if name in data:
            kwargs[name] = data[name]
    try:
        return ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigurationError):
            raise
        raise ConfigurationError(str(e)) from e


def config_to_dict(cfg: ExperimentConfig) -> dict:
    out = {}
    for f in dataclasses.fields(ExperimentConfig):
        val = getattr(cfg, f.name)
        if dataclasses.is_dataclass(val):
            out[f.name] = {g.name: getattr(val, g.name)
                           for g in dataclasses.fields(val)
                           if not g.name.startswith("_")}
        else:
            out[f.name] = val
    return out


def _coerce(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply repeated `--set dotted.key=value` flags onto the config dict."""
    for ov in overrides:
        if "=" not in ov:
            raise ConfigurationError(f"override {ov!r} is not key=value")
        key, _, raw = ov.partition("=")
        parts = key.strip().split(".")
        node = data
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigurationError(f"override path {key!r} not a section")
        node[parts[-1]] = _coerce(raw.strip())
    return data


def load_config(path, overrides: list[str] | None = None) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if overrides:
        data = apply_overrides(data, overrides)
    return config_from_dict(data)
