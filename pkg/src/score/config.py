"""Plain-text configuration: INI-style sections of key=value pairs.

Every key can be overridden on the command line with
``--set section.key=value``.  Section names map to the component
configs; unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import get_args, get_origin

from .augment import AugmentConfig
from .errors import ConfigError
from .loss import LossWeights
from .prior import PriorConfig
from .refiner import AdamConfig, RefinerConfig
from .synth import DatasetSpec, DegradeConfig, PhantomConfig


@dataclass(frozen=True)
class TrainSwitches:
    """Ablation switches; each corresponds to one training-recipe variant."""

    multiclass_labels: bool = True   # off: mixed labels collapse to under-segmentation
    use_prior: bool = True           # off: the prior channel and loss weights are zero
    morph_augment: bool = True       # off: no score-guided morphological augmentation
    stab_background: bool = False    # on: stability also pins the far background


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 3000
    val_every: int = 250
    seed: int = 0
    train_manifest: str = ""
    val_manifest: str = ""
    out_dir: str = "runs/default"
    switches: TrainSwitches = field(default_factory=TrainSwitches)
    loss: LossWeights = field(default_factory=LossWeights)
    adam: AdamConfig = field(default_factory=AdamConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    refiner: RefinerConfig = field(default_factory=RefinerConfig)
    prior: PriorConfig = field(default_factory=PriorConfig)

    def __post_init__(self):
        if self.steps <= 0:
            raise ConfigError("steps must be positive")
        if self.val_every <= 0:
            raise ConfigError("val_every must be positive")


@dataclass(frozen=True)
class GenConfig:
    out_dir: str = "data"
    phantom: PhantomConfig = field(default_factory=PhantomConfig)
    degrade: DegradeConfig = field(default_factory=DegradeConfig)
    dataset: DatasetSpec = field(default_factory=DatasetSpec)


_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def _coerce(raw: str, typ):
    origin = get_origin(typ)
    if typ is bool:
        v = raw.strip().lower()
        if v in _BOOL_TRUE:
            return True
        if v in _BOOL_FALSE:
            return False
        raise ConfigError(f"expected a boolean, got {raw!r}")
    if typ is int:
        return int(raw)
    if typ is float:
        return float(raw)
    if typ is str:
        return raw.strip()
    if origin is tuple:
        args = get_args(typ)
        items = [s.strip() for s in raw.split(",") if s.strip()]
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(s, args[0]) for s in items)
        if len(items) != len(args):
            raise ConfigError(f"expected {len(args)} comma-separated values, got {raw!r}")
        return tuple(_coerce(s, a) for s, a in zip(items, args))
    raise ConfigError(f"unsupported config value type {typ}")


def _build(dc_type, section: dict[str, str], where: str):
    """Instantiate a (flat) dataclass from string key/values."""
    known = {f.name: f for f in fields(dc_type)}
    kwargs = {}
    for key, raw in section.items():
        if key not in known:
            raise ConfigError(f"unknown key '{key}' in section [{where}]")
        f = known[key]
        typ = f.type if not isinstance(f.type, str) else _resolve_type(dc_type, f.name)
        try:
            kwargs[key] = _coerce(raw, typ)
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"[{where}] {key}: {exc}") from exc
    try:
        return dc_type(**kwargs)
    except (ValueError, ConfigError) as exc:
        raise ConfigError(f"[{where}]: {exc}") from exc


def _resolve_type(dc_type, name):
    # dataclass fields carry string annotations under `from __future__ import
    # annotations`; resolve them through the class's module globals
    import sys
    import typing

    hints = typing.get_type_hints(dc_type, vars(sys.modules[dc_type.__module__]))
    return hints[name]


def _read_sections(path) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keep key case
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    return {name: dict(parser.items(name)) for name in parser.sections()}


def apply_overrides(sections: dict[str, dict[str, str]], overrides: list[str]):
    """--set section.key=value entries, applied in order."""
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        target, value = item.split("=", 1)
        section, key = target.split(".", 1)
        sections.setdefault(section.strip(), {})[key.strip()] = value
    return sections


_TRAIN_SECTIONS = {
    "train": None,  # flat keys of TrainConfig
    "switches": TrainSwitches,
    "loss": LossWeights,
    "adam": AdamConfig,
    "augment": AugmentConfig,
    "refiner": RefinerConfig,
    "prior": PriorConfig,
}

_GEN_SECTIONS = {
    "gen": None,
    "phantom": PhantomConfig,
    "degrade": DegradeConfig,
    "dataset": DatasetSpec,
}


def load_train_config(path=None, overrides: list[str] | None = None,
                      seed: int | None = None) -> TrainConfig:
    sections = _read_sections(path) if path else {}
    apply_overrides(sections, overrides or [])
    unknown = set(sections) - set(_TRAIN_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")

    parts = {}
    for name, dc in _TRAIN_SECTIONS.items():
        if dc is None:
            continue
        parts[name] = _build(dc, sections.get(name, {}), name)

    flat = dict(sections.get("train", {}))
    if seed is not None:
        flat["seed"] = str(seed)
    top = _build(_FlatTrain, flat, "train")
    return TrainConfig(
        steps=top.steps, val_every=top.val_every, seed=top.seed,
        train_manifest=top.train_manifest, val_manifest=top.val_manifest,
        out_dir=top.out_dir,
        switches=parts["switches"], loss=parts["loss"], adam=parts["adam"],
        augment=parts["augment"], refiner=parts["refiner"], prior=parts["prior"],
    )


@dataclass(frozen=True)
class _FlatTrain:
    steps: int = 3000
    val_every: int = 250
    seed: int = 0
    train_manifest: str = ""
    val_manifest: str = ""
    out_dir: str = "runs/default"


def load_gen_config(path=None, overrides: list[str] | None = None,
                    seed: int | None = None) -> GenConfig:
    sections = _read_sections(path) if path else {}
    apply_overrides(sections, overrides or [])
    unknown = set(sections) - set(_GEN_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")
    degrade = _build(DegradeConfig, sections.get("degrade", {}), "degrade")
    phantom = _build(PhantomConfig, sections.get("phantom", {}), "phantom")
    phantom = dataclasses.replace(phantom, degrade=degrade)
    dataset = _build(DatasetSpec, sections.get("dataset", {}), "dataset")
    if seed is not None:
        dataset = dataclasses.replace(dataset, seed=seed)
    flat = sections.get("gen", {})
    out_dir = flat.get("out_dir", "data")
    unknown_keys = set(flat) - {"out_dir"}
    if unknown_keys:
        raise ConfigError(f"unknown key(s) {sorted(unknown_keys)} in section [gen]")
    return GenConfig(out_dir=out_dir, phantom=phantom, degrade=degrade, dataset=dataset)
