"""Small numpy network engine: layers, reverse-mode gradients, Adam, LR schedule.

Tensors are ``(batch, features)`` for dense layers and
``(batch, channels, length)`` for convolutional layers. A ``Conv1D`` with one
input channel accepts a flat ``(batch, length)`` input directly.

Skip connections feed the output of layer ``from_layer`` (``-1`` is the
network input) into the input of ``to_layer``. Additive skips are summed onto
the regular input, optionally through a learned 1x1 projection; concatenative
skips are appended along the feature/channel axis in ascending
``from_layer`` order.
"""
from __future__ import annotations

import base64
import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Any

import numpy as np

from .errors import ModelLoadError, NumericError, SchemaMismatchError, ShapeError, ValidationError

FORMAT_VERSION = 1
BN_MOMENTUM = 0.9
BN_EPS = 1e-5
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class Layer:
    kind: str
    in_dim: int = 0
    out_dim: int = 0
    rate: float = 0.0
    kernel: int = 3


def Dense(in_dim: int, out_dim: int) -> Layer:
    return Layer("dense", in_dim, out_dim)


def Conv1D(in_channels: int, out_channels: int, kernel: int = 3) -> Layer:
    return Layer("conv1d", in_channels, out_channels, kernel=kernel)


def BatchNorm(channels: int) -> Layer:
    return Layer("batchnorm", channels, channels)


def Dropout(rate: float) -> Layer:
    return Layer("dropout", rate=rate)


def ReLU() -> Layer:
    return Layer("relu")


def Flatten() -> Layer:
    return Layer("flatten")


def LinearOutput(in_dim: int, out_dim: int) -> Layer:
    return Layer("linear_out", in_dim, out_dim)


@dataclass(frozen=True)
class Skip:
    from_layer: int
    to_layer: int
    mode: str = "add"
    project: bool = False


def _combine_shapes(base, src, skip: Skip, where: str):
    """Shape after merging ``src`` into ``base``; also the projection matrix shape if any."""
    if skip.mode == "add":
        if src == base:
            if skip.project:
                return base, (base[0], src[0])
            return base, None
        if not skip.project:
            raise ValidationError(f"{where}: add-skip shapes {src} and {base} differ and no projection declared")
        if len(base) == 2:
            src_ch = src if len(src) == 2 else (1, src[0])
            if src_ch[1] != base[1]:
                raise ValidationError(f"{where}: add-skip lengths {src_ch[1]} and {base[1]} differ")
            return base, (base[0], src_ch[0])
        if len(src) != 1:
            raise ValidationError(f"{where}: cannot project a sequence onto a flat tensor")
        return base, (base[0], src[0])
    if skip.mode == "concat":
        if skip.project:
            raise ValidationError(f"{where}: concat-skips take no projection")
        if len(base) != len(src) or (len(base) == 2 and base[1] != src[1]):
            raise ValidationError(f"{where}: cannot concatenate shapes {src} and {base}")
        return (base[0] + src[0],) + base[1:], None
    raise ValidationError(f"{where}: unknown skip mode {skip.mode!r}")


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple[Layer, ...]
    skips: tuple[Skip, ...]
    input_dim: int
    output_dim: int
    profile: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "skips", tuple(sorted(self.skips, key=lambda s: (s.to_layer, s.from_layer))))
        self._infer()

    def _infer(self):
        n = len(self.layers)
        if n == 0 or self.layers[-1].kind != "linear_out":
            raise ValidationError("the final layer must be a LinearOutput")
        if self.layers[-1].out_dim != self.output_dim:
            raise ValidationError("final layer width differs from output_dim")
        for s in self.skips:
            if not (-1 <= s.from_layer < s.to_layer < n):
                raise ValidationError(f"skip {s} must go forward between existing layers")
        shapes: list[tuple] = []
        proj: dict[int, tuple] = {}
        in_shapes: list[tuple] = []
        cur = (self.input_dim,)
        for j, layer in enumerate(self.layers):
            where = f"layer {j} ({layer.kind})"
            for k, s in enumerate(self.skips):
                if s.to_layer == j and s.mode == "add":
                    src = shapes[s.from_layer] if s.from_layer >= 0 else (self.input_dim,)
                    cur, p = _combine_shapes(cur, src, s, where)
                    if p:
                        proj[k] = p
            for k, s in enumerate(self.skips):
                if s.to_layer == j and s.mode == "concat":
                    src = shapes[s.from_layer] if s.from_layer >= 0 else (self.input_dim,)
                    cur, _ = _combine_shapes(cur, src, s, where)
            in_shapes.append(cur)
            kind = layer.kind
            if kind in ("dense", "linear_out"):
                if len(cur) != 1 or cur[0] != layer.in_dim:
                    raise ValidationError(f"{where}: expects width {layer.in_dim}, receives shape {cur}")
                cur = (layer.out_dim,)
            elif kind == "conv1d":
                seq = cur if len(cur) == 2 else ((1,) + cur if layer.in_dim == 1 else None)
                if seq is None or seq[0] != layer.in_dim:
                    raise ValidationError(f"{where}: expects {layer.in_dim} channels, receives shape {cur}")
                if layer.kernel % 2 != 1:
                    raise ValidationError(f"{where}: same-padding needs an odd kernel")
                cur = (layer.out_dim, seq[1])
            elif kind == "batchnorm":
                if cur[0] != layer.in_dim:
                    raise ValidationError(f"{where}: expects {layer.in_dim} channels, receives shape {cur}")
            elif kind == "dropout":
                if not 0.0 <= layer.rate < 1.0:
                    raise ValidationError(f"{where}: rate must lie in [0, 1)")
            elif kind == "flatten":
                cur = (int(np.prod(cur)),)
            elif kind != "relu":
                raise ValidationError(f"{where}: unknown layer kind")
            shapes.append(cur)
        if cur != (self.output_dim,):
            raise ValidationError("network output shape differs from output_dim")
        object.__setattr__(self, "_shapes", tuple(shapes))
        object.__setattr__(self, "_in_shapes", tuple(in_shapes))
        object.__setattr__(self, "_proj", proj)

    def param_shapes(self) -> dict[str, tuple[tuple[int, ...], int]]:
        """name -> (shape, fan_in); biases and BN parameters have fan_in 0."""
        out = {}
        for j, layer in enumerate(self.layers):
            if layer.kind in ("dense", "linear_out"):
                out[f"{j}.W"] = ((layer.out_dim, layer.in_dim), layer.in_dim)
                out[f"{j}.b"] = ((layer.out_dim,), 0)
            elif layer.kind == "conv1d":
                out[f"{j}.W"] = ((layer.out_dim, layer.in_dim, layer.kernel), layer.in_dim * layer.kernel)
                out[f"{j}.b"] = ((layer.out_dim,), 0)
            elif layer.kind == "batchnorm":
                out[f"{j}.gamma"] = ((layer.in_dim,), 0)
                out[f"{j}.beta"] = ((layer.in_dim,), 0)
        for k, p in self._proj.items():
            out[f"skip{k}.W"] = (p, p[1])
        return out

    def to_dict(self) -> dict:
        return {"profile": self.profile, "input_dim": self.input_dim, "output_dim": self.output_dim,
                "layers": [asdict(l) for l in self.layers], "skips": [asdict(s) for s in self.skips]}

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(tuple(Layer(**l) for l in d["layers"]), tuple(Skip(**s) for s in d["skips"]),
                   int(d["input_dim"]), int(d["output_dim"]), d.get("profile", "custom"))


def _dense_block(widths, in_width: int, start: int, output_dim: int):
    """Dense+ReLU units where every unit's output feeds all later units."""
    layers, skips, outs = [], [], []
    for i, w in enumerate(widths):
        j = start + len(layers)
        width_in = in_width if i == 0 else sum(widths[:i])
        layers += [Dense(width_in, w), ReLU()]
        for o in outs[:-1]:
            skips.append(Skip(o, j, "concat"))
        outs.append(j + 1)
    j = start + len(layers)
    layers.append(LinearOutput(sum(widths), output_dim))
    for o in outs[:-1]:
        skips.append(Skip(o, j, "concat"))
    return layers, skips


def small_spec(input_dim: int, output_dim: int, width: int = 64, depth: int = 4) -> NetworkSpec:
    layers, skips = _dense_block([width] * depth, input_dim, 0, output_dim)
    return NetworkSpec(tuple(layers), tuple(skips), input_dim, output_dim, "small")


def conv_spec(input_dim: int, output_dim: int, dropout: float = 0.1) -> NetworkSpec:
    """Four conv blocks over the feature vector as a 1-channel sequence, then the dense block."""
    layers: list[Layer] = []
    block_in = []
    for cin, cout in ((1, 128), (128, 128), (128, 256), (256, 256)):
        block_in.append(len(layers))
        layers += [Conv1D(cin, cout), BatchNorm(cout), ReLU(), Dropout(dropout)]
    block_out = [i + 3 for i in block_in]
    skips = [Skip(block_out[0], block_in[2], "add"),
             Skip(block_out[1], block_in[3], "add", project=True),
             Skip(-1, block_in[3], "add", project=True)]
    layers.append(Flatten())
    dense_layers, dense_skips = _dense_block([256, 192, 128, 128], 256 * input_dim, len(layers), output_dim)
    return NetworkSpec(tuple(layers + dense_layers), tuple(skips + dense_skips), input_dim, output_dim, "full")


def make_spec(profile: str, input_dim: int, output_dim: int) -> NetworkSpec:
    if profile == "small":
        return small_spec(input_dim, output_dim)
    if profile == "full":
        return conv_spec(input_dim, output_dim)
    raise ValidationError(f"unknown network profile {profile!r}")


@dataclass
class Weights:
    params: dict[str, np.ndarray]
    state: dict[str, np.ndarray]
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    def copy(self) -> "Weights":
        return Weights({k: a.copy() for k, a in self.params.items()}, {k: a.copy() for k, a in self.state.items()},
                       {k: a.copy() for k, a in self.m.items()}, {k: a.copy() for k, a in self.v.items()}, self.step)


def build(spec: NetworkSpec, seed: int) -> Weights:
    """He-uniform weights, zero biases, unit BN scale."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, (shape, fan_in) in spec.param_shapes().items():
        if name.endswith(".W"):
            bound = math.sqrt(6.0 / fan_in)
            params[name] = rng.uniform(-bound, bound, size=shape)
        elif name.endswith(".gamma"):
            params[name] = np.ones(shape)
        else:
            params[name] = np.zeros(shape)
    state = {}
    for j, layer in enumerate(spec.layers):
        if layer.kind == "batchnorm":
            state[f"{j}.mean"] = np.zeros(layer.in_dim)
            state[f"{j}.var"] = np.ones(layer.in_dim)
    return Weights(params, state, {k: np.zeros_like(a) for k, a in params.items()},
                   {k: np.zeros_like(a) for k, a in params.items()}, 0)


# --- forward / backward ------------------------------------------------------

def _bn_axes(x):
    return (0,) if x.ndim == 2 else (0, 2)


def _bcast(v, x):
    return v if x.ndim == 2 else v[None, :, None]


def _as_seq(x):
    return x if x.ndim == 3 else x[:, None, :]


def _project(W, src, base_ndim):
    if base_ndim == 2:
        return src @ W.T
    return np.einsum("oc,bcl->bol", W, _as_seq(src))


def forward(spec: NetworkSpec, weights: Weights, batch, mode: str = "eval", rng=None):
    """Run the network; returns ``(outputs, cache)``.

    ``mode="train"`` normalises with batch statistics and samples dropout
    masks from ``rng`` (``rng=None`` disables dropout). ``mode="eval"`` uses
    running statistics and no dropout. Running statistics are not updated
    here; see :func:`update_running_stats`.
    """
    if mode not in ("train", "eval"):
        raise ValidationError(f"unknown mode {mode!r}")
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ShapeError(f"batch shape {x.shape} does not match input_dim {spec.input_dim}")
    P = weights.params
    outs: list[np.ndarray] = []
    cache: list[dict] = []
    for j, layer in enumerate(spec.layers):
        h = outs[j - 1] if j else x
        c: dict[str, Any] = {}
        for k, s in enumerate(spec.skips):
            if s.to_layer == j and s.mode == "add":
                src = outs[s.from_layer] if s.from_layer >= 0 else x
                if k in spec._proj:
                    h = h + _project(P[f"skip{k}.W"], src, h.ndim)
                else:
                    h = h + src
        cat = [s.from_layer for s in spec.skips if s.to_layer == j and s.mode == "concat"]
        if cat:
            c["cat_widths"] = [h.shape[1]] + [(outs[f] if f >= 0 else x).shape[1] for f in cat]
            h = np.concatenate([h] + [outs[f] if f >= 0 else x for f in cat], axis=1)
        kind = layer.kind
        if kind in ("dense", "linear_out"):
            c["x"] = h
            y = h @ P[f"{j}.W"].T + P[f"{j}.b"]
        elif kind == "conv1d":
            c["merged_ndim"] = h.ndim
            h = _as_seq(h)
            B, C, L = h.shape
            K = layer.kernel
            pad = K // 2
            hp = np.pad(h, ((0, 0), (0, 0), (pad, pad)))
            cols = np.stack([hp[:, :, k:k + L] for k in range(K)], axis=-1)  # B, C, L, K
            cols = cols.transpose(0, 2, 1, 3).reshape(B * L, C * K)
            W = P[f"{j}.W"].reshape(layer.out_dim, C * K)
            y = (cols @ W.T + P[f"{j}.b"]).reshape(B, L, layer.out_dim).transpose(0, 2, 1)
            c.update(cols=cols, in_shape=h.shape)
        elif kind == "batchnorm":
            axes = _bn_axes(h)
            if mode == "train":
                mean = h.mean(axis=axes)
                var = h.var(axis=axes)
                c.update(batch_mean=mean, batch_var=var, n=h.size // h.shape[1])
            else:
                mean, var = weights.state[f"{j}.mean"], weights.state[f"{j}.var"]
            inv = 1.0 / np.sqrt(var + BN_EPS)
            xhat = (h - _bcast(mean, h)) * _bcast(inv, h)
            c.update(xhat=xhat, inv=inv, train=mode == "train")
            y = xhat * _bcast(P[f"{j}.gamma"], h) + _bcast(P[f"{j}.beta"], h)
        elif kind == "dropout":
            if mode == "train" and rng is not None and layer.rate > 0:
                mask = (rng.random(h.shape) >= layer.rate) / (1.0 - layer.rate)
                c["mask"] = mask
                y = h * mask
            else:
                y = h
        elif kind == "relu":
            c["pos"] = h > 0
            y = np.maximum(h, 0.0)
        elif kind == "flatten":
            c["in_shape"] = h.shape
            y = h.reshape(h.shape[0], -1)
        else:  # pragma: no cover - rejected at construction
            raise ValidationError(kind)
        if not np.isfinite(y).all():
            raise NumericError(f"non-finite output in layer {j} ({kind})")
        outs.append(y)
        cache.append(c)
    return outs[-1], {"x": x, "outs": outs, "layers": cache, "mode": mode}


def backward(spec: NetworkSpec, weights: Weights, cache: dict, grad_out: np.ndarray) -> dict[str, np.ndarray]:
    P = weights.params
    outs = cache["outs"]
    n = len(spec.layers)
    g_outs: list[np.ndarray | None] = [None] * n
    g_outs[-1] = grad_out
    g_x = np.zeros_like(cache["x"])
    grads: dict[str, np.ndarray] = {}

    def add_to(idx, g):
        if idx < 0:
            nonlocal g_x
            g_x = g_x + (g if g.ndim == 2 else g.reshape(g.shape[0], -1))
        elif g_outs[idx] is None:
            g_outs[idx] = g
        else:
            g_outs[idx] = g_outs[idx] + g

    for j in range(n - 1, -1, -1):
        layer = spec.layers[j]
        c = cache["layers"][j]
        g = g_outs[j]
        if g is None:
            g = np.zeros_like(outs[j])
        kind = layer.kind
        if kind in ("dense", "linear_out"):
            grads[f"{j}.W"] = g.T @ c["x"]
            grads[f"{j}.b"] = g.sum(axis=0)
            gin = g @ P[f"{j}.W"]
        elif kind == "conv1d":
            B, C, L = c["in_shape"]
            K = layer.kernel
            pad = K // 2
            gf = g.transpose(0, 2, 1).reshape(B * L, layer.out_dim)
            W = P[f"{j}.W"].reshape(layer.out_dim, C * K)
            grads[f"{j}.W"] = (gf.T @ c["cols"]).reshape(layer.out_dim, C, K)
            grads[f"{j}.b"] = gf.sum(axis=0)
            gcols = (gf @ W).reshape(B, L, C, K)
            ghp = np.zeros((B, C, L + 2 * pad))
            for k in range(K):
                ghp[:, :, k:k + L] += gcols[:, :, :, k].transpose(0, 2, 1)
            gin = ghp[:, :, pad:pad + L]
            if c["merged_ndim"] == 2:
                gin = gin[:, 0, :]
        elif kind == "batchnorm":
            xhat = c["xhat"]
            axes = _bn_axes(g)
            grads[f"{j}.gamma"] = (g * xhat).sum(axis=axes)
            grads[f"{j}.beta"] = g.sum(axis=axes)
            gx = g * _bcast(P[f"{j}.gamma"], g)
            if c["train"]:
                m = c["n"]
                s1 = gx.sum(axis=axes)
                s2 = (gx * xhat).sum(axis=axes)
                gin = _bcast(c["inv"], g) / m * (m * gx - _bcast(s1, g) - xhat * _bcast(s2, g))
            else:
                gin = gx * _bcast(c["inv"], g)
        elif kind == "dropout":
            gin = g * c["mask"] if "mask" in c else g
        elif kind == "relu":
            gin = np.where(c["pos"], g, 0.0)
        elif kind == "flatten":
            gin = g.reshape(c["in_shape"])
        # route gradient of the layer input back to its sources
        widths = c.get("cat_widths")
        if widths:
            cat = [s.from_layer for s in spec.skips if s.to_layer == j and s.mode == "concat"]
            bounds = np.cumsum(widths)[:-1]
            pieces = np.split(gin, bounds, axis=1)
            gin = pieces[0]
            for f, piece in zip(cat, pieces[1:]):
                add_to(f, piece)
        for k, s in enumerate(spec.skips):
            if s.to_layer == j and s.mode == "add":
                src = outs[s.from_layer] if s.from_layer >= 0 else cache["x"]
                if k in spec._proj:
                    W = P[f"skip{k}.W"]
                    if gin.ndim == 2:
                        grads[f"skip{k}.W"] = gin.T @ src
                        add_to(s.from_layer, gin @ W)
                    else:
                        srcs = _as_seq(src)
                        grads[f"skip{k}.W"] = np.einsum("bol,bcl->oc", gin, srcs)
                        gs = np.einsum("oc,bol->bcl", W, gin)
                        add_to(s.from_layer, gs if src.ndim == 3 else gs[:, 0, :])
                else:
                    add_to(s.from_layer, gin)
        add_to(j - 1, gin)
    grads["__input__"] = g_x
    return grads


def mse(pred: np.ndarray, targets: np.ndarray) -> float:
    return float(np.mean((pred - targets) ** 2))


def loss_and_grads(spec: NetworkSpec, weights: Weights, batch, targets, rng=None, mode: str = "train"):
    """Mean squared error over rows and output columns, with parameter gradients.

    Returns ``(loss, grads, cache)``; the cache carries batch statistics for
    :func:`update_running_stats`.
    """
    targets = np.asarray(targets, np.float64)
    if targets.ndim != 2 or targets.shape[1] != spec.output_dim:
        raise ShapeError(f"targets shape {targets.shape} does not match output_dim {spec.output_dim}")
    pred, cache = forward(spec, weights, batch, mode, rng)
    if targets.shape[0] != pred.shape[0]:
        raise ShapeError("targets and batch differ in row count")
    err = pred - targets
    loss = float(np.mean(err ** 2))
    grads = backward(spec, weights, cache, 2.0 * err / err.size)
    grads.pop("__input__")
    return loss, grads, cache


def update_running_stats(spec: NetworkSpec, weights: Weights, cache: dict) -> None:
    for j, layer in enumerate(spec.layers):
        c = cache["layers"][j]
        if layer.kind == "batchnorm" and "batch_mean" in c:
            weights.state[f"{j}.mean"] = BN_MOMENTUM * weights.state[f"{j}.mean"] + (1 - BN_MOMENTUM) * c["batch_mean"]
            weights.state[f"{j}.var"] = BN_MOMENTUM * weights.state[f"{j}.var"] + (1 - BN_MOMENTUM) * c["batch_var"]


def adam_step(weights: Weights, grads: dict[str, np.ndarray], lr: float) -> Weights:
    """One bias-corrected Adam update, in place; returns ``weights``."""
    for name, g in grads.items():
        if name not in weights.params or g.shape != weights.params[name].shape:
            raise ShapeError(f"gradient {name} does not match parameters")
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for {name}")
    weights.step += 1
    t = weights.step
    c1 = 1.0 - ADAM_BETA1 ** t
    c2 = 1.0 - ADAM_BETA2 ** t
    for name, g in grads.items():
        m = weights.m[name]
        v = weights.v[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        if lr:
            weights.params[name] -= lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
    return weights


def predict(spec: NetworkSpec, weights: Weights, X, chunk: int = 1024) -> np.ndarray:
    X = np.asarray(X, np.float64)
    if len(X) == 0:
        return np.zeros((0, spec.output_dim))
    return np.concatenate([forward(spec, weights, X[i:i + chunk], "eval")[0] for i in range(0, len(X), chunk)])


# --- learning-rate schedule -----------------------------------------------------

@dataclass(frozen=True)
class LrSchedulerState:
    lr: float = 0.01
    best_val_loss: float = math.inf
    epochs_since_improvement: int = 0
    factor: float = 0.75
    patience: int = 2
    floor: float = 1e-5
    initial: float = 0.01


def scheduler_step(state: LrSchedulerState, val_loss: float) -> LrSchedulerState:
    """Reduce-on-plateau: strict improvement resets; ``patience`` misses cut lr."""
    if val_loss < state.best_val_loss:
        return replace(state, best_val_loss=val_loss, epochs_since_improvement=0)
    waited = state.epochs_since_improvement + 1
    if waited >= state.patience:
        return replace(state, lr=max(state.lr * state.factor, state.floor), epochs_since_improvement=0)
    return replace(state, epochs_since_improvement=waited)


# --- model documents -----------------------------------------------------------

def _encode(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"], validate=True)
    return np.frombuffer(raw, dtype="<f8").reshape(d["shape"]).astype(np.float64)


def save(spec: NetworkSpec, weights: Weights, schema, scaler, *, rng_seed: int | None = None,
         history: dict | None = None) -> str:
    doc = {
        "format_version": FORMAT_VERSION,
        "spec": spec.to_dict(),
        "schema": schema.to_dict(),
        "scaler": scaler.to_dict() if scaler is not None and scaler.fitted else None,
        "parameters": {k: _encode(a) for k, a in sorted(weights.params.items())},
        "state": {k: _encode(a) for k, a in sorted(weights.state.items())},
        "adam": {"step": weights.step,
                 "m": {k: _encode(a) for k, a in sorted(weights.m.items())},
                 "v": {k: _encode(a) for k, a in sorted(weights.v.items())}},
        "rng_seed": rng_seed,
        "training_history": history or {},
    }
    return json.dumps(doc, sort_keys=True)


def load(document: str):
    """Inverse of :func:`save`; returns ``(spec, weights, schema, scaler, extras)``."""
    from .features import FeatureSchema, Scaler

    try:
        doc = json.loads(document)
    except (json.JSONDecodeError, TypeError) as exc:
        raise ModelLoadError(f"model document is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format_version") != FORMAT_VERSION:
        raise ModelLoadError(f"unsupported model format version {doc.get('format_version') if isinstance(doc, dict) else None}")
    try:
        spec = NetworkSpec.from_dict(doc["spec"])
        schema = FeatureSchema.from_dict(doc["schema"])
        scaler = Scaler.from_dict(doc["scaler"]) if doc.get("scaler") else None
        params = {k: _decode(v) for k, v in doc["parameters"].items()}
        state = {k: _decode(v) for k, v in doc["state"].items()}
        adam = doc["adam"]
        m = {k: _decode(v) for k, v in adam["m"].items()}
        v = {k: _decode(v) for k, v in adam["v"].items()}
        step = int(adam["step"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelLoadError(f"malformed model document: {exc}") from None
    if spec.input_dim != schema.input_dim or spec.output_dim != schema.output_dim:
        raise SchemaMismatchError(
            f"network dims ({spec.input_dim}, {spec.output_dim}) differ from schema "
            f"({schema.input_dim}, {schema.output_dim})")
    if scaler is not None and (len(scaler.x_mean) != schema.input_dim or len(scaler.y_mean) != schema.output_dim):
        raise SchemaMismatchError("scaler dimensions differ from schema")
    expected = {k: s for k, (s, _) in spec.param_shapes().items()}
    if set(expected) != set(params) or any(params[k].shape != tuple(s) for k, s in expected.items()):
        raise ModelLoadError("parameter shapes do not match the network spec")
    for k, a in list(params.items()) + list(state.items()):
        if not np.isfinite(a).all():
            raise ModelLoadError(f"non-finite values in {k}")
    extras = {"rng_seed": doc.get("rng_seed"), "training_history": doc.get("training_history", {})}
    return spec, Weights(params, state, m, v, step), schema, scaler, extras
