"""JSON run configuration.

One file drives a whole ``evaluate`` comparison::

    {
      "seed": 7,
      "manifest": "corpus.tsv",
      "task_manifest": "task.tsv",
      "methods": ["mulsupcon", "scratch"],
      "regime": "finetune",
      "pretrain": {"epochs": 200, "batch_size": 256, "threshold": 0.3},
      "augmentation": {"gaussian_sigma": 0.05},
      "downstream": {"epochs": 10, "batch_size": 32, "lr": 0.0001},
      "cv": {"folds": 5, "repeats": 10}
    }

The first entry of ``methods`` is the proposed method every other method is
compared against. Relative paths resolve against the config file's
directory. Unknown keys anywhere are rejected.
"""

import hashlib
import json
import os
from dataclasses import dataclass, field

from .errors import BadConfig
from .losses import LossConfig
from .trainer import METHODS, AugmentationConfig, DownstreamConfig, PretrainConfig

EVAL_METHODS = METHODS + ("scratch",)

_PRETRAIN_KEYS = {"epochs", "batch_size", "hidden_dims", "head_dims", "projection_head",
                  "temperature", "threshold", "optimizer"}
_AUG_KEYS = {"gaussian_sigma", "feature_dropout_p", "scale_jitter"}
_DOWN_KEYS = {"epochs", "batch_size", "lr", "schedule_kind", "step_epoch", "gamma"}
_CV_KEYS = {"folds", "repeats"}
_TOP_KEYS = {"seed", "manifest", "task_manifest", "methods", "regime", "pretrain",
             "augmentation", "downstream", "cv"}


def _reject_unknown(section, data, allowed):
    if not isinstance(data, dict):
        raise BadConfig(f"{section}: expected an object")
    extra = sorted(set(data) - allowed)
    if extra:
        raise BadConfig(f"{section}: unknown key(s) {', '.join(extra)}")


@dataclass
class RunConfig:
    seed: int = 0
    manifest: str = None
    task_manifest: str = None
    methods: list = field(default_factory=lambda: ["mulsupcon", "scratch"])
    regime: str = "finetune"
    pretrain: dict = field(default_factory=dict)
    augmentation: dict = field(default_factory=dict)
    downstream: dict = field(default_factory=dict)
    cv: dict = field(default_factory=dict)

    base_dir = None  # set by load_config; not part of the fingerprint

    def __post_init__(self):
        _reject_unknown("pretrain", self.pretrain, _PRETRAIN_KEYS)
        _reject_unknown("augmentation", self.augmentation, _AUG_KEYS)
        _reject_unknown("downstream", self.downstream, _DOWN_KEYS)
        _reject_unknown("cv", self.cv, _CV_KEYS)
        if not isinstance(self.seed, int):
            raise BadConfig("seed: expected an integer")
        if not self.methods or len(set(self.methods)) != len(self.methods):
            raise BadConfig("methods: expected a non-empty list without duplicates")
        for m in self.methods:
            if m not in EVAL_METHODS:
                raise BadConfig(f"methods: unknown method {m!r}")
        if self.regime not in ("finetune", "linear_probe"):
            raise BadConfig(f"regime: unknown regime {self.regime!r}")
        if "temperature" in self.pretrain or "threshold" in self.pretrain:
            try:
                LossConfig(self.pretrain.get("temperature", 0.07), self.pretrain.get("threshold", 0.3))
            except ValueError as exc:
                raise BadConfig(f"pretrain: {exc}") from None
        if self.folds < 2 or self.repeats < 1:
            raise BadConfig("cv: folds must be >= 2 and repeats >= 1")
        # build every sub-config once so bad values fail before any run starts
        for m in self.methods:
            if m != "scratch":
                self.pretrain_config(m)
        self.downstream_config(0)

    def resolve(self, key):
        """Absolute path for ``manifest`` / ``task_manifest``."""
        value = getattr(self, key)
        if value is None:
            raise BadConfig(f"{key}: required for this command")
        if self.base_dir and not os.path.isabs(value):
            return os.path.join(self.base_dir, value)
        return value

    @property
    def folds(self):
        return int(self.cv.get("folds", 5))

    @property
    def repeats(self):
        return int(self.cv.get("repeats", 10))

    def augmentation_config(self):
        aug = dict(self.augmentation)
        if "scale_jitter" in aug:
            aug["scale_jitter"] = tuple(aug["scale_jitter"])
        return AugmentationConfig(**aug)

    def pretrain_config(self, method, seed=None):
        p = dict(self.pretrain)
        loss = None
        if "temperature" in p or "threshold" in p:
            default = PretrainConfig(method=method).loss
            loss = LossConfig(p.pop("temperature", default.temperature),
                              p.pop("threshold", default.threshold))
        for key in ("hidden_dims", "head_dims"):
            if key in p:
                p[key] = tuple(p[key])
        try:
            return PretrainConfig(method=method, loss=loss, seed=self.seed if seed is None else seed,
                                  augmentation=self.augmentation_config(), **p)
        except TypeError as exc:
            raise BadConfig(f"pretrain: {exc}") from None

    def downstream_config(self, seed, hidden_dims=None):
        d = dict(self.downstream)
        if hidden_dims is None:
            hidden_dims = tuple(self.pretrain.get("hidden_dims", (128, 64)))
        return DownstreamConfig(regime=self.regime, seed=seed,
                                scratch_hidden_dims=tuple(hidden_dims), **d)

    def canonical(self):
        return json.dumps({
            "seed": self.seed, "manifest": self.manifest, "task_manifest": self.task_manifest,
            "methods": list(self.methods), "regime": self.regime, "pretrain": self.pretrain,
            "augmentation": self.augmentation, "downstream": self.downstream, "cv": self.cv,
        }, sort_keys=True)

    def fingerprint(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise BadConfig(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(data, base_dir=os.path.dirname(os.path.abspath(path)))


def config_from_dict(data, base_dir=None):
    _reject_unknown("config", data, _TOP_KEYS)
    cfg = RunConfig(**data)
    cfg.base_dir = base_dir
    return cfg
