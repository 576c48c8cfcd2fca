"""Pretraining (contrastive or cross-entropy), fine-tuning and linear probing."""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import losses
from .encoder import EncoderModel, LrSchedule, load_checkpoint, lr_at, make_optimizer, save_checkpoint
from .errors import BadConfig, EmptyCorpus, LabelCardinality, MissingLabels, ShapeMismatch, ValidationError
from .losses import EmbeddingBatch, LossConfig
from .seeding import rng_for

log = logging.getLogger(__name__)

METHODS = ("mulsupcon", "infonce", "supcon", "crossentropy")


@dataclass(frozen=True)
class AugmentationConfig:
    gaussian_sigma: float = 0.05
    feature_dropout_p: float = 0.1
    scale_jitter: tuple = (0.8, 1.2)

    def __post_init__(self):
        lo, hi = self.scale_jitter
        object.__setattr__(self, "scale_jitter", (float(lo), float(hi)))
        if self.gaussian_sigma < 0:
            raise BadConfig("gaussian_sigma must be >= 0")
        if not 0.0 <= self.feature_dropout_p <= 1.0:
            raise BadConfig("feature_dropout_p must lie in [0, 1]")
        if not 0 < lo <= hi:
            raise BadConfig("scale_jitter must satisfy 0 < lo <= hi")


def augment(x, aug, rng):
    """One stochastic view per row of ``x``: scale, add noise, drop coordinates."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n, d = x.shape
    lo, hi = aug.scale_jitter
    scale = rng.uniform(lo, hi, size=(n, 1))
    noise = rng.standard_normal((n, d)) * aug.gaussian_sigma
    keep = rng.random((n, d)) >= aug.feature_dropout_p
    return (scale * x + noise) * keep


def two_views(sample, aug, rng):
    sample = np.asarray(sample, dtype=np.float64)
    if not np.all(np.isfinite(sample)):
        raise ValidationError("sample must be finite")
    v1 = augment(sample, aug, rng)
    v2 = augment(sample, aug, rng)
    if sample.ndim == 1:
        return v1[0], v2[0]
    return v1, v2


def _default_loss(method):
    return LossConfig(temperature=0.1 if method == "infonce" else 0.07, threshold=0.3)


def _default_optimizer(method):
    if method == "crossentropy":
        return {"kind": "adam", "lr": 1e-3}
    return {"kind": "sgd", "lr": 0.05, "momentum": 0.9, "weight_decay": 1e-4}


@dataclass(frozen=True)
class PretrainConfig:
    method: str = "mulsupcon"
    loss: LossConfig = None
    optimizer: dict = None
    epochs: int = 200
    batch_size: int = 256
    seed: int = 0
    augmentation: AugmentationConfig = field(default_factory=AugmentationConfig)
    hidden_dims: tuple = (128, 64)
    head_dims: tuple = (64, 32)
    projection_head: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise BadConfig(f"unknown pretraining method {self.method!r}")
        if self.loss is None:
            object.__setattr__(self, "loss", _default_loss(self.method))
        if self.optimizer is None:
            object.__setattr__(self, "optimizer", _default_optimizer(self.method))
        if self.batch_size < 2:
            raise BadConfig("batch_size must be >= 2")
        if self.epochs < 1:
            raise BadConfig("epochs must be >= 1")
        make_optimizer(self.optimizer)  # validates


@dataclass(frozen=True)
class DownstreamConfig:
    regime: str = "finetune"
    epochs: int = 10
    batch_size: int = 32
    lr: float = 1e-4
    schedule_kind: str = "step"
    step_epoch: int = 5
    gamma: float = 0.1
    seed: int = 0
    scratch_hidden_dims: tuple = (128, 64)

    def __post_init__(self):
        if self.regime not in ("finetune", "linear_probe"):
            raise BadConfig(f"unknown downstream regime {self.regime!r}")
        if self.epochs < 0:
            raise BadConfig("epochs must be >= 0")
        if self.batch_size < 1:
            raise BadConfig("batch_size must be >= 1")
        self.schedule()

    def schedule(self):
        return LrSchedule(self.lr, self.schedule_kind, self.step_epoch, self.gamma)


@dataclass
class PretrainResult:
    model: EncoderModel
    method: str
    seed: int
    epoch_log: list
    classifier: tuple = None

    def save(self, path):
        extras = {}
        if self.classifier is not None:
            extras = {"ce_weight": self.classifier[0], "ce_bias": self.classifier[1]}
        save_checkpoint(path, self.model, self.method, self.seed, extras)

    def write_log(self, path):
        with open(path, "w") as fh:
            for epoch, loss, skipped in self.epoch_log:
                fh.write(f"{epoch}\t{loss:.10g}\t{skipped}\n")


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    return [order[i: i + batch_size] for i in range(0, n, batch_size)]


def pretrain(corpus, cfg):
    """Pretrain an encoder on ``corpus`` with ``cfg.method``.

    Every epoch reshuffles the corpus, draws two augmented views per sample
    (one for cross-entropy), computes the loss on the embeddings and takes one
    optimizer step per mini-batch. The last, possibly short, batch is kept.
    """
    n = len(corpus)
    if n == 0:
        raise EmptyCorpus("pretraining corpus is empty")
    method = cfg.method
    if method == "mulsupcon" and corpus.labels is None:
        raise MissingLabels("mulsupcon needs metadata labels")
    if method in ("supcon", "crossentropy") and corpus.class_ids is None:
        raise MissingLabels(f"{method} needs class_id for every sample")

    use_head = cfg.projection_head and method != "crossentropy"
    model = EncoderModel((corpus.dim,) + tuple(cfg.hidden_dims), cfg.head_dims,
                         projection_head=use_head, seed=rng_for(cfg.seed, "init").integers(2**63))
    opt = make_optimizer(cfg.optimizer)
    shuffle_rng = rng_for(cfg.seed, "shuffle")
    aug_rng = rng_for(cfg.seed, "augment")

    classifier = None
    if method == "crossentropy":
        n_classes = int(corpus.class_ids.max()) + 1
        if n_classes < 2:
            raise BadConfig("cross-entropy pretraining needs at least two classes")
        d = model.embedding_dim
        bound = 1.0 / np.sqrt(d)
        crng = rng_for(cfg.seed, "classifier")
        classifier = [crng.uniform(-bound, bound, (d, n_classes)),
                      crng.uniform(-bound, bound, n_classes)]

    labels = corpus.labels
    epoch_log = []
    for epoch in range(cfg.epochs):
        values, skipped = [], 0
        for idx in _batches(n, cfg.batch_size, shuffle_rng):
            x = corpus.features[idx]
            if method == "crossentropy":
                z, cache = model.forward(augment(x, cfg.augmentation, aug_rng), use_head=False)
                logits = z @ classifier[0] + classifier[1]
                res = losses.cross_entropy(logits, corpus.class_ids[idx])
                grads, _ = model.backward(cache, res.grad @ classifier[0].T)
                grads = grads + [z.T @ res.grad, res.grad.sum(axis=0)]
                opt.step(model.params + classifier, grads)
                model.version += 1
            else:
                v1 = augment(x, cfg.augmentation, aug_rng)
                v2 = augment(x, cfg.augmentation, aug_rng)
                z, cache = model.forward(np.vstack([v1, v2]), use_head=use_head)
                m = len(idx)
                batch = EmbeddingBatch.stacked(z[:m], z[m:])
                if method == "infonce":
                    res = losses.info_nce(batch, cfg.loss.temperature)
                elif method == "supcon":
                    res = losses.supcon(batch, corpus.class_ids[idx], cfg.loss.temperature)
                else:
                    res = losses.mulsupcon(batch, [labels[i] for i in idx], cfg.loss)
                grads, _ = model.backward(cache, res.grad)
                model.step(opt, grads)
            values.append(res.value)
            skipped += res.anchors_skipped
        mean = float(np.mean(values))
        epoch_log.append((epoch, mean, skipped))
        log.debug("epoch %d loss %.6f skipped %d", epoch, mean, skipped)
    return PretrainResult(model, method, cfg.seed, epoch_log,
                          None if classifier is None else tuple(classifier))


# -- downstream ----------------------------------------------------------------


@dataclass
class ClassifierHead:
    """Linear ``d -> 1`` scorer with sigmoid output. Zero-initialized."""

    weight: np.ndarray
    bias: np.ndarray

    @classmethod
    def zeros(cls, d):
        return cls(np.zeros(d), np.zeros(1))

    def logits(self, z):
        return z @ self.weight + self.bias[0]

    def scores(self, z):
        return _sigmoid(self.logits(z))


def _sigmoid(s):
    return 0.5 * (1.0 + np.tanh(0.5 * s))


def _bce(logit, y):
    """Mean binary cross-entropy on logits and its gradient w.r.t. the logits."""
    value = float(np.mean(np.logaddexp(0.0, logit) - y * logit))
    return value, (_sigmoid(logit) - y) / len(y)


def _check_task(task):
    if not np.all(np.isin(task.labels, (0, 1))):
        raise LabelCardinality("downstream labels must be binary")


def _resolve_encoder(source, task, cfg):
    if source is None:
        # random initialization
        dims = (task.features.shape[1],) + tuple(cfg.scratch_hidden_dims)
        return EncoderModel(dims, projection_head=False,
                            seed=rng_for(cfg.seed, "scratch-init").integers(2**63))
    if isinstance(source, PretrainResult):
        source = source.model
    elif isinstance(source, str):
        source = load_checkpoint(source)[0]
    if source.layer_dims[0] != task.features.shape[1]:
        raise ShapeMismatch("encoder input dimension does not match the task features")
    return source.drop_projection_head()


def finetune(source, task, cfg):
    """Train encoder and head jointly on a binary task.

    ``source`` is ``None`` (random init), a :class:`PretrainResult`, an
    :class:`EncoderModel` or a checkpoint path. The source is never modified.
    """
    _check_task(task)
    model = _resolve_encoder(source, task, cfg)
    head = ClassifierHead.zeros(model.embedding_dim)
    opt = make_optimizer({"kind": "adam", "lr": cfg.lr})
    sched = cfg.schedule()
    shuffle_rng = rng_for(cfg.seed, "downstream-shuffle")
    y_all = task.labels.astype(np.float64)
    for epoch in range(cfg.epochs):
        opt.learning_rate = lr_at(sched, epoch)
        for idx in _batches(len(task), cfg.batch_size, shuffle_rng):
            z, cache = model.forward(task.features[idx], use_head=False)
            _, ds = _bce(head.logits(z), y_all[idx])
            grads, _ = model.backward(cache, ds[:, None] * head.weight[None, :])
            grads = grads + [z.T @ ds, np.array([ds.sum()])]
            opt.step(model.params + [head.weight, head.bias], grads)
            model.version += 1
    return model, head


def linear_probe(source, task, cfg):
    """Train only a linear head on frozen encoder embeddings.

    Returns ``(model, head)``; the encoder parameters are asserted unchanged.
    """
    _check_task(task)
    model = _resolve_encoder(source, task, cfg)
    before = model.fingerprint()
    z_all = model.embed(task.features)
    head = ClassifierHead.zeros(model.embedding_dim)
    opt = make_optimizer({"kind": "adam", "lr": cfg.lr})
    sched = cfg.schedule()
    shuffle_rng = rng_for(cfg.seed, "downstream-shuffle")
    y_all = task.labels.astype(np.float64)
    for epoch in range(cfg.epochs):
        opt.learning_rate = lr_at(sched, epoch)
        for idx in _batches(len(task), cfg.batch_size, shuffle_rng):
            z = z_all[idx]
            _, ds = _bce(head.logits(z), y_all[idx])
            opt.step([head.weight, head.bias], [z.T @ ds, np.array([ds.sum()])])
    if model.fingerprint() != before:
        raise AssertionError("linear probing modified encoder parameters")
    return model, head


def downstream(source, task, cfg):
    if cfg.regime == "finetune":
        return finetune(source, task, cfg)
    return linear_probe(source, task, cfg)


def predict_scores(model, head, samples):
    z = model.embed(samples, use_head=False)
    if z.ndim == 1:
        z = z[None, :]
    if z.shape[1] != head.weight.shape[0]:
        raise ShapeMismatch("head dimension does not match encoder output")
    return head.scores(z)
