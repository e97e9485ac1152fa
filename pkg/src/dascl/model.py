"""Encoder / projection head / classifier and their optimizers.

The encoder is a plain relu MLP over flattened inputs. The projection head
(one relu layer, a linear map, then row normalization) exists only for the
contrastive loss; the classifier reads encoder features directly.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .rng import make_rng

CHECKPOINT_FORMAT = "dascl-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int = 256
    hidden_dims: tuple = (128, 64)
    embed_dim: int = 64
    proj_dim: int = 32
    num_classes: int = 5

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(d) for d in self.hidden_dims))
        dims = (self.input_dim, self.embed_dim, self.proj_dim, *self.hidden_dims)
        if any(d < 1 for d in dims):
            raise ValueError("all dimensions must be >= 1")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")

    def to_dict(self):
        return {
            "input_dim": self.input_dim,
            "hidden_dims": list(self.hidden_dims),
            "embed_dim": self.embed_dim,
            "proj_dim": self.proj_dim,
            "num_classes": self.num_classes,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            input_dim=d["input_dim"],
            hidden_dims=tuple(d["hidden_dims"]),
            embed_dim=d["embed_dim"],
            proj_dim=d["proj_dim"],
            num_classes=d["num_classes"],
        )


class ModelBundle:
    """Holds the parameter tensors; binding them to a tape enables gradients."""

    def __init__(self, config: ModelConfig, params: dict):
        self.config = config
        self.params = params  # name -> Tensor, insertion order fixed at init

    def bind(self, tape) -> None:
        """Register every parameter as a leaf on `tape` (None unbinds)."""
        for p in self.params.values():
            if tape is None:
                p.tape = None
                p.node_id = None
            else:
                tape.adopt(p)

    def parameter_arrays(self) -> dict:
        return {k: p.data for k, p in self.params.items()}

    def copy(self) -> "ModelBundle":
        return ModelBundle(
            self.config, {k: T.Tensor(p.data.copy()) for k, p in self.params.items()}
        )


def _layer_dims(config: ModelConfig):
    enc = [config.input_dim, *config.hidden_dims, config.embed_dim]
    proj = [config.embed_dim, config.embed_dim, config.proj_dim]
    return enc, proj


def init_model(config: ModelConfig, seed: int) -> ModelBundle:
    """He-style init (stddev sqrt(2/fan_in)) for weights, zeros for biases."""
    rng = make_rng(seed)
    params = {}

    def dense(prefix, fan_in, fan_out):
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
        params[f"{prefix}.w"] = T.Tensor(w)
        # biases kept 2-d so the row broadcast is expressible as a matmul
        params[f"{prefix}.b"] = T.Tensor(np.zeros((1, fan_out)))

    enc, proj = _layer_dims(config)
    for i in range(len(enc) - 1):
        dense(f"enc{i}", enc[i], enc[i + 1])
    for i in range(len(proj) - 1):
        dense(f"proj{i}", proj[i], proj[i + 1])
    dense("clf", config.embed_dim, config.num_classes)
    return ModelBundle(config, params)


def _dense(params, prefix, x):
    xw = T.matmul(x, params[f"{prefix}.w"])
    ones = T.Tensor(np.ones((x.data.shape[0], 1)))
    return T.add(xw, T.matmul(ones, params[f"{prefix}.b"]))


def forward_features(model: ModelBundle, x: T.Tensor) -> T.Tensor:
    """MLP features: relu between layers, linear final layer."""
    if x.data.ndim != 2 or x.data.shape[1] != model.config.input_dim:
        raise ValueError(
            f"expected input [n, {model.config.input_dim}], got {x.data.shape}"
        )
    n_layers = len(model.config.hidden_dims) + 1
    h = x
    for i in range(n_layers):
        h = _dense(model.params, f"enc{i}", h)
        if i < n_layers - 1:
            h = h.relu()
    return h


def forward_projection(model: ModelBundle, h: T.Tensor) -> T.Tensor:
    """Contrastive-head embedding; every output row is unit-norm."""
    z = _dense(model.params, "proj0", h).relu()
    z = _dense(model.params, "proj1", z)
    return T.l2_normalize_rows(z)


def forward_logits(model: ModelBundle, h: T.Tensor) -> T.Tensor:
    return _dense(model.params, "clf", h)


@dataclass
class OptimizerState:
    kind: str  # "sgd" (with momentum) or "adam"
    lr: float
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    buffers: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if self.lr < 0:
            raise ValueError("learning rate must be >= 0")


def optimizer_step(state: OptimizerState, params: dict, grads: dict) -> None:
    """One in-place update. `grads` maps the same names to gradient arrays."""
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != p.data.shape:
            raise ValueError(
                f"gradient shape {g.shape} does not match parameter "
                f"{name} of shape {p.data.shape}"
            )
    state.step_count += 1
    if state.kind == "sgd":
        for name, p in params.items():
            v = state.buffers.setdefault(name, np.zeros_like(p.data))
            v *= state.momentum
            v += grads[name]
            p.data -= state.lr * v
    else:
        t = state.step_count
        for name, p in params.items():
            g = grads[name]
            m = state.buffers.setdefault(f"{name}.m", np.zeros_like(p.data))
            v = state.buffers.setdefault(f"{name}.v", np.zeros_like(p.data))
            m *= state.beta1
            m += (1.0 - state.beta1) * g
            v *= state.beta2
            v += (1.0 - state.beta2) * g * g
            m_hat = m / (1.0 - state.beta1**t)
            v_hat = v / (1.0 - state.beta2**t)
            p.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def save_checkpoint(model: ModelBundle, path) -> None:
    """JSON checkpoint; float64 values round-trip exactly via repr."""
    record = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "params": {
            k: {"shape": list(p.data.shape), "data": p.data.reshape(-1).tolist()}
            for k, p in model.params.items()
        },
    }
    with open(path, "w") as f:
        json.dump(record, f)


def load_checkpoint(path) -> ModelBundle:
    with open(path) as f:
        record = json.load(f)
    if record.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a model checkpoint")
    if record.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {record.get('version')}")
    config = ModelConfig.from_dict(record["config"])
    params = {}
    for k, entry in record["params"].items():
        arr = np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
        params[k] = T.Tensor(arr)
    return ModelBundle(config, params)
