"""Minimal dense network with explicit backprop, dropout, and Adam.

Everything is double precision numpy. Hidden layers are ReLU with inverted
dropout (activations scaled by 1/(1-p) at train time so evaluation needs no
rescaling); the output layer is linear. Models are immutable between
optimizer steps: adam_step returns a fresh model, and a forward cache is
only valid for the exact model object that produced it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ComputationError, DataError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class MlpModel:
    layer_sizes: list
    weights: list
    biases: list
    dropout: float

    @property
    def n_layers(self):
        return len(self.weights)


def init_mlp(layer_sizes, dropout=0.0, seed=0):
    """He-uniform weights (bound sqrt(6/fan_in)), zero biases."""
    if len(layer_sizes) < 2:
        raise DataError("need at least input and output sizes")
    if any(s < 1 for s in layer_sizes):
        raise DataError("layer sizes must be positive")
    if not 0.0 <= dropout < 1.0:
        raise DataError("dropout must be in [0, 1)")
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(list(layer_sizes), weights, biases, float(dropout))


@dataclass
class ForwardCache:
    model: MlpModel = field(repr=False)
    inputs: list = field(repr=False)   # input to each layer
    pre_acts: list = field(repr=False) # z = a W + b per layer
    masks: list = field(repr=False)    # dropout masks (None in eval mode)
    mode: str = "train"


def forward(model, batch, mode="train", seed=None):
    """Run the network; returns (outputs, cache) for a later backward pass.

    In train mode each hidden layer draws a fresh dropout mask from `seed`,
    so the same seed reproduces the same masks exactly. Eval mode applies
    no dropout and ignores the seed.
    """
    if mode not in ("train", "eval"):
        raise DataError(f"unknown mode {mode!r}")
    a = np.asarray(batch, dtype=float)
    if a.ndim != 2 or a.shape[1] != model.layer_sizes[0]:
        raise DataError(
            f"batch must be (n, {model.layer_sizes[0]}), got {a.shape}"
        )
    use_dropout = mode == "train" and model.dropout > 0.0
    rng = np.random.default_rng(seed) if use_dropout else None

    inputs = []
    pre_acts = []
    masks = []
    for l in range(model.n_layers):
        inputs.append(a)
        z = a @ model.weights[l] + model.biases[l]
        pre_acts.append(z)
        if l < model.n_layers - 1:
            a = np.maximum(z, 0.0)
            if use_dropout:
                keep = rng.random(a.shape) >= model.dropout
                a = a * keep / (1.0 - model.dropout)
                masks.append(keep)
            else:
                masks.append(None)
        else:
            a = z
            masks.append(None)
    return a, ForwardCache(model=model, inputs=inputs, pre_acts=pre_acts, masks=masks, mode=mode)


def backward(model, cache, output_gradient):
    """Exact gradients of sum(loss) given d loss / d outputs.

    Returns (weight_grads, bias_grads) shaped like the model parameters.
    The cache must come from a forward pass of this very model object.
    """
    if cache.model is not model:
        raise ComputationError("stale cache: model was updated since this forward pass")
    g = np.asarray(output_gradient, dtype=float)
    if g.shape != cache.pre_acts[-1].shape:
        raise DataError(
            f"output_gradient must be {cache.pre_acts[-1].shape}, got {g.shape}"
        )
    weight_grads = [None] * model.n_layers
    bias_grads = [None] * model.n_layers
    for l in range(model.n_layers - 1, -1, -1):
        weight_grads[l] = cache.inputs[l].T @ g
        bias_grads[l] = g.sum(axis=0)
        if l > 0:
            g = g @ model.weights[l].T
            if cache.masks[l - 1] is not None:
                g = g * cache.masks[l - 1] / (1.0 - model.dropout)
            g = g * (cache.pre_acts[l - 1] > 0.0)
    return weight_grads, bias_grads


@dataclass
class OptimizerState:
    m_w: list
    v_w: list
    m_b: list
    v_b: list
    step: int
    base_lr: float
    gamma: float
    weight_decay: float
    epoch: int = 0

    @property
    def effective_lr(self):
        return self.base_lr * self.gamma**self.epoch


def init_optimizer(model, base_lr, gamma=1.0, weight_decay=0.0):
    if base_lr <= 0:
        raise DataError("base_lr must be positive")
    return OptimizerState(
        m_w=[np.zeros_like(w) for w in model.weights],
        v_w=[np.zeros_like(w) for w in model.weights],
        m_b=[np.zeros_like(b) for b in model.biases],
        v_b=[np.zeros_like(b) for b in model.biases],
        step=0,
        base_lr=float(base_lr),
        gamma=float(gamma),
        weight_decay=float(weight_decay),
    )


def adam_step(model, grads, state):
    """One Adam update with decoupled weight decay; returns new model+state.

    The decay shrinks parameters by lr*wd*theta before the Adam update, and
    the learning rate is base_lr * gamma**epoch (the caller sets
    state.epoch once per epoch). Non-finite gradients abort with the layer
    index in the message.
    """
    weight_grads, bias_grads = grads
    for l, (gw, gb) in enumerate(zip(weight_grads, bias_grads)):
        if not (np.isfinite(gw).all() and np.isfinite(gb).all()):
            raise ComputationError(f"non-finite gradient in layer {l}")

    lr = state.effective_lr
    t = state.step + 1
    new_w, new_b = [], []
    m_w, v_w, m_b, v_b = [], [], [], []
    bc1 = 1.0 - ADAM_BETA1**t
    bc2 = 1.0 - ADAM_BETA2**t
    for l in range(model.n_layers):
        for theta, g, m_old, v_old, out_theta, out_m, out_v in (
            (model.weights[l], weight_grads[l], state.m_w[l], state.v_w[l], new_w, m_w, v_w),
            (model.biases[l], bias_grads[l], state.m_b[l], state.v_b[l], new_b, m_b, v_b),
        ):
            theta = theta * (1.0 - lr * state.weight_decay)
            m = ADAM_BETA1 * m_old + (1.0 - ADAM_BETA1) * g
            v = ADAM_BETA2 * v_old + (1.0 - ADAM_BETA2) * g * g
            theta = theta - lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)
            out_theta.append(theta)
            out_m.append(m)
            out_v.append(v)

    new_model = MlpModel(list(model.layer_sizes), new_w, new_b, model.dropout)
    new_state = OptimizerState(
        m_w=m_w,
        v_w=v_w,
        m_b=m_b,
        v_b=v_b,
        step=t,
        base_lr=state.base_lr,
        gamma=state.gamma,
        weight_decay=state.weight_decay,
        epoch=state.epoch,
    )
    return new_model, new_state


def epoch_batches(n, batch_size, rng):
    """Seeded shuffle, then contiguous batches; the final short batch stays."""
    if batch_size < 1:
        raise DataError("batch_size must be >= 1")
    perm = rng.permutation(n)
    return [perm[i : i + batch_size] for i in range(0, n, batch_size)]


def model_to_dict(model):
    """JSON-ready checkpoint: sizes, dropout, row-major parameter lists."""
    return {
        "layer_sizes": [int(s) for s in model.layer_sizes],
        "dropout": model.dropout,
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }


def model_from_dict(doc):
    return MlpModel(
        layer_sizes=[int(s) for s in doc["layer_sizes"]],
        weights=[np.asarray(w, dtype=float) for w in doc["weights"]],
        biases=[np.asarray(b, dtype=float) for b in doc["biases"]],
        dropout=float(doc["dropout"]),
    )
