"""Run configuration: one JSON document with dataset/features/model/train/augment/eval sections."""

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace

from .augment import AugmentationPipeline, make_stage
from .data import SyntheticSpec
from .errors import ConfigError
from .features import FeatureConfig
from .model import DEFAULT_CONV, ConvSpec, ModelConfig
from .train import TrainConfig

SECTIONS = ("dataset", "features", "model", "train", "augment", "eval")


@dataclass
class DatasetSection:
    manifest: str = None
    synthetic: SyntheticSpec = None
    frames: int = None
    val_fraction: float = 0.1
    cache_dir: str = None


@dataclass
class ModelSection:
    conv_layers: tuple = DEFAULT_CONV
    fc_hidden: tuple = (512, 256)
    padding: str = "same"

    def build(self, n_classes, frames, mels):
        return ModelConfig(n_classes=n_classes, input_frames=frames, input_mels=mels,
                           conv_layers=self.conv_layers,
                           fc_dims=tuple(self.fc_hidden) + (n_classes,), padding=self.padding)


@dataclass
class AugmentSection:
    pipeline: tuple = ()
    p_aug: float = 0.5
    params: dict = field(default_factory=dict)

    def build(self):
        return AugmentationPipeline(
            tuple(make_stage(name, **self.params.get(name, {})) for name in self.pipeline),
            self.p_aug)


@dataclass
class EvalSection:
    frr_target: float = 0.1
    k: int = 5
    positive_label: str = None


@dataclass
class RunConfig:
    dataset: DatasetSection = field(default_factory=DatasetSection)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainConfig = field(default_factory=TrainConfig)
    augment: AugmentSection = field(default_factory=AugmentSection)
    eval: EvalSection = field(default_factory=EvalSection)
    source: str = None

    def train_config(self):
        return replace(self.train, pipeline=self.augment.build()).validate()

    def to_dict(self):
        ds = asdict(self.dataset)
        if self.dataset.synthetic is None:
            ds.pop("synthetic")
        model = {"conv_layers": [{"filters": c.filters, "kernel": list(c.kernel),
                                  "stride": list(c.stride)} for c in self.model.conv_layers],
                 "fc_hidden": list(self.model.fc_hidden), "padding": self.model.padding}
        train = {f.name: getattr(self.train, f.name) for f in fields(TrainConfig)
                 if f.name != "pipeline"}
        return {"dataset": ds, "features": asdict(self.features), "model": model,
                "train": train, "augment": asdict(self.augment), "eval": asdict(self.eval)}

    def dump(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _section(cls, raw, name):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"section {name!r} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"section {name!r}: unknown key(s) {', '.join(unknown)}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"section {name!r}: {exc}") from None


def parse_pipeline_names(value):
    if value is None:
        return ()
    if isinstance(value, str):
        value = [v.strip() for v in value.split(",") if v.strip()]
    names = tuple(value)
    return () if names in ((), ("none",)) else names


def from_dict(raw, base_dir="."):
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(raw) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"unknown section(s) {', '.join(unknown)}")
    ds_raw = dict(raw.get("dataset") or {})
    if "synthetic" in ds_raw and ds_raw["synthetic"] is not None:
        ds_raw["synthetic"] = _section(SyntheticSpec, ds_raw["synthetic"], "dataset.synthetic")
    dataset = _section(DatasetSection, ds_raw, "dataset")
    for attr in ("manifest", "cache_dir"):
        value = getattr(dataset, attr)
        if value is not None and not os.path.isabs(value):
            setattr(dataset, attr, os.path.normpath(os.path.join(base_dir, value)))

    model_raw = dict(raw.get("model") or {})
    if "conv_layers" in model_raw:
        model_raw["conv_layers"] = tuple(ConvSpec(**c) for c in model_raw["conv_layers"])
    if "fc_hidden" in model_raw:
        model_raw["fc_hidden"] = tuple(model_raw["fc_hidden"])
    aug_raw = dict(raw.get("augment") or {})
    aug_raw["pipeline"] = parse_pipeline_names(aug_raw.get("pipeline"))
    cfg = RunConfig(
        dataset=dataset,
        features=_section(FeatureConfig, raw.get("features"), "features"),
        model=_section(ModelSection, model_raw, "model"),
        train=_section(TrainConfig, raw.get("train"), "train"),
        augment=_section(AugmentSection, aug_raw, "augment"),
        eval=_section(EvalSection, raw.get("eval"), "eval"),
    )
    cfg.features.validate()
    cfg.augment.build()
    cfg.train.validate()
    return cfg


def load_config(path):
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    cfg = from_dict(raw, os.path.dirname(os.path.abspath(path)))
    cfg.source = path
    return cfg


def apply_overrides(cfg, seed=None, pipeline=None):
    """Command-line flags take precedence over file values."""
    if seed is not None:
        cfg.train = replace(cfg.train, seed=seed)
    if pipeline is not None:
        cfg.augment = replace(cfg.augment, pipeline=parse_pipeline_names(pipeline))
        cfg.augment.build()
    return cfg
