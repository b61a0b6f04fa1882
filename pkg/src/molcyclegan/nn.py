"""Dense networks with hand-written backprop, batch norm, leaky-ReLU and Adam.

Conventions: a batch is an ``(m, dim)`` float64 array; a dense layer computes
``x @ W + b`` with ``W`` of shape ``(in_dim, out_dim)``. A hidden unit is
``LeakyReLU(BatchNorm(x @ W + b))``; a residual layer adds its input back.
"""
from dataclasses import dataclass, field

import numpy as np

from ._archive import read_archive, write_archive
from .errors import NumericError, PreconditionError, ShapeError, StateError

LEAKY_SLOPE = 0.1
BN_MOMENTUM = 0.9
BN_EPS = 1e-5
CHECKPOINT_FORMAT = "molcyclegan-mlp/1"

DENSE = "dense"
RESIDUAL = "residual-dense"


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_dim: int
    out_dim: int
    use_batchnorm: bool = True
    use_activation: bool = True

    def __post_init__(self):
        if self.kind not in (DENSE, RESIDUAL):
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.in_dim < 1 or self.out_dim < 1:
            raise ShapeError("layer dimensions must be >= 1")
        if self.kind == RESIDUAL and self.in_dim != self.out_dim:
            raise ShapeError(f"residual layer needs in_dim == out_dim, got {self.in_dim} -> {self.out_dim}")

    def to_dict(self):
        return {"kind": self.kind, "in_dim": self.in_dim, "out_dim": self.out_dim,
                "use_batchnorm": self.use_batchnorm, "use_activation": self.use_activation}


@dataclass
class BatchNormState:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray

    @classmethod
    def fresh(cls, dim):
        return cls(np.ones(dim), np.zeros(dim), np.zeros(dim), np.ones(dim))


def leaky_relu(x, slope=LEAKY_SLOPE):
    return np.where(x > 0, x, slope * x)


def batchnorm_forward(x, state, mode="train", update_stats=True, momentum=BN_MOMENTUM, eps=BN_EPS):
    """Normalise columns of ``x``; returns ``(out, cache)``.

    In train mode batch statistics are used and, if ``update_stats``, folded
    into the running estimates. ``cache`` is ``None`` in eval mode.
    """
    if mode == "eval":
        inv_std = 1.0 / np.sqrt(state.running_var + eps)
        return (x - state.running_mean) * inv_std * state.gamma + state.beta, None
    if x.shape[0] < 2:
        raise PreconditionError("batch norm in train mode needs at least 2 rows")
    mean = x.mean(axis=0)
    centered = x - mean
    var = (centered * centered).mean(axis=0)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    if update_stats:
        state.running_mean = momentum * state.running_mean + (1.0 - momentum) * mean
        state.running_var = momentum * state.running_var + (1.0 - momentum) * var
    return xhat * state.gamma + state.beta, (xhat, inv_std)


def batchnorm_backward(dout, state, cache):
    """Gradients ``(dx, dgamma, dbeta)`` of a train-mode batch norm."""
    xhat, inv_std = cache
    m = dout.shape[0]
    dbeta = dout.sum(axis=0)
    dgamma = (dout * xhat).sum(axis=0)
    dxhat = dout * state.gamma
    dx = (inv_std / m) * (m * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
    return dx, dgamma, dbeta


class MlpModel:
    """Feed-forward stack of :class:`LayerSpec` layers.

    Parameters are exposed through :meth:`parameters` as a flat, ordered dict
    (``"0.W"``, ``"0.b"``, ``"0.gamma"``, ...) which is what the optimizer and
    the checkpoint format operate on.
    """

    def __init__(self, layers, rng=None, init="glorot"):
        layers = list(layers)
        if not layers:
            raise ShapeError("model needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ShapeError(f"layer chain mismatch: {prev.out_dim} -> {nxt.in_dim}")
        self.layers = layers
        self.mode = "train"
        self._cache = None
        rng = np.random.default_rng(0) if rng is None else rng
        self.weights = []
        self.biases = []
        self.bn = []
        for spec in layers:
            if init == "zeros":
                W = np.zeros((spec.in_dim, spec.out_dim))
            elif init == "identity":
                W = np.eye(spec.in_dim, spec.out_dim)
            else:
                limit = np.sqrt(6.0 / (spec.in_dim + spec.out_dim))
                W = rng.uniform(-limit, limit, size=(spec.in_dim, spec.out_dim))
            self.weights.append(W)
            self.biases.append(np.zeros(spec.out_dim))
            self.bn.append(BatchNormState.fresh(spec.out_dim) if spec.use_batchnorm else None)

    @property
    def in_dim(self):
        return self.layers[0].in_dim

    @property
    def out_dim(self):
        return self.layers[-1].out_dim

    def train(self):
        self.mode = "train"
        return self

    def eval(self):
        self.mode = "eval"
        self._cache = None
        return self

    def parameters(self):
        params = {}
        for i, bn in enumerate(self.bn):
            params[f"{i}.W"] = self.weights[i]
            params[f"{i}.b"] = self.biases[i]
            if bn is not None:
                params[f"{i}.gamma"] = bn.gamma
                params[f"{i}.beta"] = bn.beta
        return params

    def buffers(self):
        out = {}
        for i, bn in enumerate(self.bn):
            if bn is not None:
                out[f"{i}.running_mean"] = bn.running_mean
                out[f"{i}.running_var"] = bn.running_var
        return out

    def load_state(self, params, buffers=None):
        """Copy arrays into the model by name; shapes must match exactly."""
        current = self.parameters()
        current.update(self.buffers())
        incoming = dict(params)
        incoming.update(buffers or {})
        for name, value in incoming.items():
            if name not in current:
                raise ShapeError(f"unexpected tensor {name!r}")
            if np.shape(value) != current[name].shape:
                raise ShapeError(f"{name}: expected shape {current[name].shape}, got {np.shape(value)}")
        for name, value in incoming.items():
            idx, key = name.split(".", 1)
            i = int(idx)
            value = np.array(value, dtype=np.float64)
            if key == "W":
                self.weights[i] = value
            elif key == "b":
                self.biases[i] = value
            else:
                setattr(self.bn[i], key, value)

    def copy(self):
        clone = MlpModel.__new__(MlpModel)
        clone.layers = list(self.layers)
        clone.mode = self.mode
        clone._cache = None
        clone.weights = [w.copy() for w in self.weights]
        clone.biases = [b.copy() for b in self.biases]
        clone.bn = [None if s is None else BatchNormState(s.gamma.copy(), s.beta.copy(),
                                                          s.running_mean.copy(), s.running_var.copy())
                    for s in self.bn]
        return clone

    def __call__(self, x):
        return forward(self, x)


def _check_batch(model, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.in_dim:
        raise ShapeError(f"expected batch of shape (m, {model.in_dim}), got {x.shape}")
    if x.shape[0] < 1:
        raise ShapeError("empty batch")
    return x


def forward_cached(model, x, update_stats=True):
    """Forward pass returning ``(output, cache)``; cache is ``None`` in eval mode.

    Use this when one network is applied to several batches before a single
    backward pass (the cycle losses do this).
    """
    x = _check_batch(model, x)
    train = model.mode == "train"
    caches = [] if train else None
    h = x
    for i, spec in enumerate(model.layers):
        # overflow is reported below as a NumericError, not as a numpy warning
        with np.errstate(over="ignore", invalid="ignore"):
            z = h @ model.weights[i] + model.biases[i]
            bn_cache = None
            if spec.use_batchnorm:
                z, bn_cache = batchnorm_forward(z, model.bn[i], model.mode, update_stats)
            pre_act = z
            if spec.use_activation:
                z = leaky_relu(z)
            out = h + z if spec.kind == RESIDUAL else z
        if not np.all(np.isfinite(out)):
            raise NumericError(f"non-finite activation in layer {i} ({spec.kind} {spec.in_dim}->{spec.out_dim})")
        if train:
            caches.append((h, bn_cache, pre_act))
        h = out
    return h, caches


def forward(model, x, update_stats=True):
    out, cache = forward_cached(model, x, update_stats)
    model._cache = cache
    return out


def backward(model, upstream, cache=None):
    """Backpropagate ``upstream = dL/d(output)``.

    Returns ``(grads, dx)`` where ``grads`` is keyed like
    :meth:`MlpModel.parameters`.
    """
    cache = model._cache if cache is None else cache
    if cache is None:
        raise StateError("backward called without a train-mode forward cache")
    g = np.asarray(upstream, dtype=np.float64)
    if g.shape != (cache[0][0].shape[0], model.out_dim):
        raise ShapeError(f"upstream gradient shape {g.shape} does not match model output")
    grads = {}
    for i in range(len(model.layers) - 1, -1, -1):
        spec = model.layers[i]
        h, bn_cache, pre_act = cache[i]
        dz = g
        if spec.use_activation:
            dz = np.where(pre_act > 0, dz, LEAKY_SLOPE * dz)
        if spec.use_batchnorm:
            dz, dgamma, dbeta = batchnorm_backward(dz, model.bn[i], bn_cache)
            grads[f"{i}.gamma"] = dgamma
            grads[f"{i}.beta"] = dbeta
        grads[f"{i}.W"] = h.T @ dz
        grads[f"{i}.b"] = dz.sum(axis=0)
        dh = dz @ model.weights[i].T
        if spec.kind == RESIDUAL:
            dh = dh + g
        g = dh
    return grads, g


def add_grads(acc, grads):
    """Sum two gradient dicts (either may be ``None``)."""
    if acc is None:
        return {k: v.copy() for k, v in grads.items()}
    for k, v in grads.items():
        acc[k] = acc[k] + v
    return acc


# --- Adam -----------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)

    def copy(self):
        return AdamState(self.lr, self.beta1, self.beta2, self.epsilon, self.step_count,
                         {k: v.copy() for k, v in self.first_moment.items()},
                         {k: v.copy() for k, v in self.second_moment.items()})


def adam_step(params, grads, state, sign=-1.0):
    """One bias-corrected Adam update, in place on ``params``.

    ``sign=-1`` descends, ``sign=+1`` ascends. Parameters without a gradient
    entry are left untouched. Returns ``(params, state)``.
    """
    for name, g in grads.items():
        if name not in params:
            raise ShapeError(f"gradient for unknown parameter {name!r}")
        if np.shape(g) != params[name].shape:
            raise ShapeError(f"{name}: gradient shape {np.shape(g)} != parameter shape {params[name].shape}")
        m = state.first_moment.get(name)
        if m is not None and m.shape != params[name].shape:
            raise ShapeError(f"{name}: moment shape {m.shape} != parameter shape {params[name].shape}")
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, g in grads.items():
        p = params[name]
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        state.first_moment[name] = m
        state.second_moment[name] = v
        p += sign * state.lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return params, state


# --- checkpoints ----------------------------------------------------------

def model_manifest(model):
    return {"layers": [s.to_dict() for s in model.layers], "mode": model.mode}


def model_from_manifest(manifest, arrays):
    layers = [LayerSpec(**d) for d in manifest["layers"]]
    model = MlpModel(layers, init="zeros")
    model.load_state({k: v for k, v in arrays.items() if not k.split(".", 1)[1].startswith("running")},
                     {k: v for k, v in arrays.items() if k.split(".", 1)[1].startswith("running")})
    model.mode = manifest.get("mode", "train")
    return model


def adam_to_archive(state, prefix=""):
    meta = {"lr": state.lr, "beta1": state.beta1, "beta2": state.beta2,
            "epsilon": state.epsilon, "step_count": state.step_count}
    arrays = {}
    for k, v in state.first_moment.items():
        arrays[f"{prefix}adam.m.{k}"] = v
    for k, v in state.second_moment.items():
        arrays[f"{prefix}adam.v.{k}"] = v
    return meta, arrays


def adam_from_archive(meta, arrays, prefix=""):
    state = AdamState(**meta)
    for key, v in arrays.items():
        if key.startswith(prefix + "adam.m."):
            state.first_moment[key[len(prefix) + 7:]] = v
        elif key.startswith(prefix + "adam.v."):
            state.second_moment[key[len(prefix) + 7:]] = v
    return state


def save_model(path, model, adam=None):
    manifest = {"format": CHECKPOINT_FORMAT, **model_manifest(model)}
    arrays = dict(model.parameters())
    arrays.update(model.buffers())
    if adam is not None:
        meta, adam_arrays = adam_to_archive(adam)
        manifest["adam"] = meta
        arrays.update(adam_arrays)
    write_archive(path, manifest, arrays)


def load_model(path):
    """Returns ``(model, adam_state_or_None)``."""
    manifest, arrays = read_archive(path)
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise StateError(f"{path}: not a {CHECKPOINT_FORMAT} checkpoint (found {manifest.get('format')!r})")
    model_arrays = {k: v for k, v in arrays.items() if not k.startswith("adam.")}
    model = model_from_manifest(manifest, model_arrays)
    adam = adam_from_archive(manifest["adam"], arrays) if "adam" in manifest else None
    return model, adam
