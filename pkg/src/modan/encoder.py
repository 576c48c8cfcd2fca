"""Fully-connected encoder with hand-written backward pass, optimizers and
checkpoint persistence."""

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import BadConfig, ShapeMismatch, StaleCache, ValidationError

NORM_EPS = 1e-12
DEFAULT_LAYERS = (16, 128, 64)
DEFAULT_HEAD = (64, 32)


class EncoderModel:
    """MLP backbone ``layer_dims[0] -> ... -> layer_dims[-1]`` with ReLU on the
    hidden layers, optionally followed by a projection head. The output of
    :meth:`forward` is always L2-normalized.

    Parameters are stored as ``[W0, b0, W1, b1, ...]`` (backbone first, then
    head) with ``W`` of shape ``(fan_in, fan_out)``.
    """

    def __init__(self, layer_dims=DEFAULT_LAYERS, head_dims=DEFAULT_HEAD,
                 projection_head=True, seed=0):
        layer_dims = tuple(int(d) for d in layer_dims)
        if len(layer_dims) < 2 or any(d <= 0 for d in layer_dims):
            raise BadConfig(f"layer_dims must hold >= 2 positive sizes, got {layer_dims}")
        self.layer_dims = layer_dims
        self.head_dims = tuple(int(d) for d in head_dims) if projection_head else ()
        if projection_head and (not self.head_dims or any(d <= 0 for d in self.head_dims)):
            raise BadConfig("projection head needs positive sizes")
        self.has_projection_head = bool(projection_head)
        self.seed = None if seed is None else int(seed)
        self.version = 0

        rng = np.random.default_rng(seed)
        self.params = []
        dims = list(layer_dims)
        if self.has_projection_head:
            dims += list(self.head_dims)
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.params.append(rng.uniform(-bound, bound, size=fan_out))

    @property
    def n_backbone(self):
        return len(self.layer_dims) - 1

    @property
    def n_layers(self):
        return len(self.params) // 2

    @property
    def embedding_dim(self):
        return self.layer_dims[-1]

    def output_dim(self, use_head=None):
        if self._use_head(use_head):
            return self.head_dims[-1]
        return self.layer_dims[-1]

    def n_parameters(self):
        return sum(p.size for p in self.params)

    def _use_head(self, use_head):
        if use_head is None:
            return self.has_projection_head
        if use_head and not self.has_projection_head:
            raise ValidationError("model has no projection head")
        return bool(use_head)

    def _relu_flags(self, n_active):
        nb = self.n_backbone
        # ReLU everywhere except the last layer of the backbone and of the head
        return [i != nb - 1 and i != n_active - 1 for i in range(n_active)]

    def drop_projection_head(self):
        """Return a copy without the projection head (used downstream)."""
        out = self.copy()
        out.params = out.params[: 2 * self.n_backbone]
        out.has_projection_head = False
        out.head_dims = ()
        return out

    def copy(self):
        out = object.__new__(EncoderModel)
        out.__dict__.update(self.__dict__)
        out.params = [p.copy() for p in self.params]
        out.version = 0
        return out

    def forward(self, x, use_head=None):
        """Embed ``x`` (one sample or a ``n x d_in`` matrix).

        Returns ``(z, cache)``; ``z`` has unit-norm rows.
        """
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.layer_dims[0]:
            raise ShapeMismatch(f"input dimension {x.shape[1]} != {self.layer_dims[0]}")
        n_active = self.n_layers if self._use_head(use_head) else self.n_backbone
        relu = self._relu_flags(n_active)
        acts = [x]
        pre = []
        h = x
        for i in range(n_active):
            u = h @ self.params[2 * i] + self.params[2 * i + 1]
            pre.append(u)
            h = np.maximum(u, 0.0) if relu[i] else u
            acts.append(h)
        norm = np.maximum(np.linalg.norm(h, axis=1, keepdims=True), NORM_EPS)
        z = h / norm
        cache = _Cache(self, self.version, n_active, relu, acts, pre, norm, z, single)
        return (z[0] if single else z), cache

    def embed(self, x, use_head=False):
        return self.forward(x, use_head=use_head)[0]

    def backward(self, cache, grad_z):
        """Gradients of a scalar loss w.r.t. every parameter and the input.

        Returns ``(param_grads, grad_x)`` with ``param_grads`` aligned with
        ``self.params`` (zeros for layers the forward pass skipped).
        """
        if cache.model is not self or cache.version != self.version:
            raise StaleCache("cache does not belong to the current parameters")
        g = np.atleast_2d(np.asarray(grad_z, dtype=np.float64))
        if g.shape != cache.z.shape:
            raise ShapeMismatch(f"grad_z shape {g.shape} != {cache.z.shape}")
        z = cache.z
        # d(u/|u|)/du = (I - z z^T) / |u|
        dh = (g - z * np.sum(z * g, axis=1, keepdims=True)) / cache.norm
        grads = [np.zeros_like(p) for p in self.params]
        for i in reversed(range(cache.n_active)):
            du = dh * (cache.pre[i] > 0) if cache.relu[i] else dh
            grads[2 * i] = cache.acts[i].T @ du
            grads[2 * i + 1] = du.sum(axis=0)
            dh = du @ self.params[2 * i].T
        grad_x = dh[0] if cache.single else dh
        return grads, grad_x

    def step(self, optimizer, grads):
        optimizer.step(self.params, grads)
        self.version += 1

    def fingerprint(self):
        """Hash of all parameter bytes (for freezing checks)."""
        h = hashlib.sha256()
        for p in self.params:
            h.update(np.ascontiguousarray(p, dtype="<f8").tobytes())
        return h.hexdigest()


@dataclass
class _Cache:
    model: EncoderModel
    version: int
    n_active: int
    relu: list
    acts: list
    pre: list
    norm: np.ndarray
    z: np.ndarray
    single: bool


def forward(model, x, use_head=None):
    return model.forward(x, use_head=use_head)


def backward(model, cache, grad_z):
    return model.backward(cache, grad_z)


def _check_shapes(params, grads):
    if len(params) != len(grads) or any(p.shape != g.shape for p, g in zip(params, grads)):
        raise ShapeMismatch("gradients do not match parameter shapes")


@dataclass
class SGDMomentum:
    """``g = grad + wd*w; v = momentum*v + g; w -= lr*v``."""

    learning_rate: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 1e-4
    velocity: list = field(default_factory=list)
    kind = "sgd"

    def step(self, params, grads):
        _check_shapes(params, grads)
        if not self.velocity:
            self.velocity = [np.zeros_like(p) for p in params]
        elif any(v.shape != p.shape for v, p in zip(self.velocity, params)):
            raise ShapeMismatch("optimizer state does not match parameters")
        for w, g, v in zip(params, grads, self.velocity):
            g = g + self.weight_decay * w
            v *= self.momentum
            v += g
            w -= self.learning_rate * v
        return params


@dataclass
class Adam:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0
    kind = "adam"

    def step(self, params, grads):
        _check_shapes(params, grads)
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        elif any(m.shape != p.shape for m, p in zip(self.m, params)):
            raise ShapeMismatch("optimizer state does not match parameters")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for w, g, m, v in zip(params, grads, self.m, self.v):
            if self.weight_decay:
                g = g + self.weight_decay * w
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            w -= self.learning_rate * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return params


def sgd_step(state, params, grads):
    return state.step(params, grads)


def adam_step(state, params, grads):
    return state.step(params, grads)


def make_optimizer(options):
    """Build an optimizer from a dict like ``{"kind": "sgd", "lr": 0.05, ...}``."""
    options = dict(options)
    kind = options.pop("kind", "sgd")
    lr = options.pop("lr", None)
    if kind == "sgd":
        opt = SGDMomentum(
            learning_rate=0.05 if lr is None else lr,
            momentum=options.pop("momentum", 0.9),
            weight_decay=options.pop("weight_decay", 1e-4),
        )
    elif kind == "adam":
        opt = Adam(learning_rate=1e-3 if lr is None else lr,
                   weight_decay=options.pop("weight_decay", 0.0))
    else:
        raise BadConfig(f"unknown optimizer kind {kind!r}")
    if options:
        raise BadConfig(f"unknown optimizer keys: {sorted(options)}")
    return opt


@dataclass(frozen=True)
class LrSchedule:
    base_lr: float
    kind: str = "constant"
    step_epoch: int = 5
    gamma: float = 0.1

    def __post_init__(self):
        if self.kind not in ("constant", "step"):
            raise BadConfig(f"unknown schedule kind {self.kind!r}")
        if not 0.0 < self.gamma <= 1.0:
            raise BadConfig("gamma must lie in (0, 1]")
        if self.step_epoch < 1:
            raise BadConfig("step_epoch must be >= 1")


def lr_at(schedule, epoch):
    if schedule.kind == "step" and epoch >= schedule.step_epoch:
        return schedule.base_lr * schedule.gamma
    return schedule.base_lr


# -- checkpoints -------------------------------------------------------------

CHECKPOINT_MAGIC = b"MODANCKP"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, model, method, seed, extras=None):
    """Write ``model`` (and optional named extra arrays) to ``path``.

    Layout: magic, ``<I`` version, ``<Q`` header length, UTF-8 JSON header,
    then every array as raw little-endian float64 in header order.
    """
    extras = extras or {}
    header = {
        "layer_dims": list(model.layer_dims),
        "head_dims": list(model.head_dims),
        "projection_head": model.has_projection_head,
        "seed": seed,
        "method": method,
        "param_shapes": [list(p.shape) for p in model.params],
        "extras": [[name, list(np.shape(a))] for name, a in extras.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<IQ", CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        for p in model.params:
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())
        for a in extras.values():
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Return ``(model, header, extras)``."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != CHECKPOINT_MAGIC:
        raise ValidationError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack_from("<IQ", data, 8)
    if version != CHECKPOINT_VERSION:
        raise ValidationError(f"{path}: unsupported checkpoint version {version}")
    off = 8 + struct.calcsize("<IQ")
    header = json.loads(data[off: off + hlen])
    off += hlen

    model = EncoderModel(header["layer_dims"], header["head_dims"] or DEFAULT_HEAD,
                         header["projection_head"], seed=header["seed"])
    expected = [list(p.shape) for p in model.params]
    if expected != header["param_shapes"]:
        raise ShapeMismatch(f"{path}: parameter shapes do not match layer_dims")

    def take(shape):
        nonlocal off
        count = int(np.prod(shape)) if shape else 1
        end = off + 8 * count
        if end > len(data):
            raise ValidationError(f"{path}: truncated checkpoint")
        arr = np.frombuffer(data[off:end], dtype="<f8").astype(np.float64).reshape(shape)
        off = end
        return arr

    model.params = [take(tuple(s)) for s in header["param_shapes"]]
    extras = {name: take(tuple(shape)) for name, shape in header["extras"]}
    if off != len(data):
        raise ValidationError(f"{path}: trailing bytes in checkpoint")
    return model, header, extras
