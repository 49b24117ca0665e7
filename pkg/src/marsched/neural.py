"""Minimal feed-forward networks on numpy: forward, reverse-mode gradients,
Adam, and JSON serialization.

Tensors are plain numpy float64 arrays. Batches are row-major: input of
shape (batch, input_dim), single samples may be passed as 1-D and come back
1-D. Format versioning happens at the model-file level, not per network.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, ModelFormatError, TrainingDiverged

ACTIVATIONS = ("tanh", "relu", "identity")


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "identity":
        return z
    raise ContractError(f"unknown activation {name!r}")


def _act_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    """d activation / d z, given pre-activation z and activation a."""
    if name == "tanh":
        return 1.0 - a * a
    if name == "relu":
        return (z > 0.0).astype(z.dtype)
    if name == "identity":
        return np.ones_like(z)
    raise ContractError(f"unknown activation {name!r}")


@dataclass
class Layer:
    weights: np.ndarray     # (fan_in, fan_out)
    bias: np.ndarray        # (fan_out,)
    activation: str

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ContractError(f"unknown activation {self.activation!r}")


@dataclass
class Network:
    layers: list[Layer]

    @property
    def input_dim(self) -> int:
        return self.layers[0].weights.shape[0]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weights.shape[1]

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.append(layer.weights)
            out.append(layer.bias)
        return out

    def set_parameters(self, params: list[np.ndarray]) -> None:
        if len(params) != 2 * len(self.layers):
            raise ContractError("parameter list does not match network shape")
        for i, layer in enumerate(self.layers):
            w, b = params[2 * i], params[2 * i + 1]
            if w.shape != layer.weights.shape or b.shape != layer.bias.shape:
                raise ContractError("parameter shapes do not match network")
            layer.weights = w.copy()
            layer.bias = b.copy()

    def copy_parameters(self) -> list[np.ndarray]:
        return [p.copy() for p in self.parameters()]


def init_network(dims: list[int], hidden_activation: str = "tanh",
                 output_activation: str = "identity",
                 rng: np.random.Generator | None = None) -> Network:
    """Glorot-uniform init: weights ~ U(+-sqrt(6/(fan_in+fan_out))), zero bias."""
    if len(dims) < 2:
        raise ContractError("a network needs at least input and output dims")
    rng = rng if rng is not None else np.random.default_rng(0)
    layers = []
    for i in range(len(dims) - 1):
        fan_in, fan_out = dims[i], dims[i + 1]
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        b = np.zeros(fan_out)
        act = output_activation if i == len(dims) - 2 else hidden_activation
        layers.append(Layer(weights=w, bias=b, activation=act))
    return Network(layers=layers)


@dataclass
class ForwardCache:
    net: Network
    inputs: list[np.ndarray]       # input to each layer, 2-D
    pre_acts: list[np.ndarray]     # z per layer
    acts: list[np.ndarray]         # activation(z) per layer
    squeezed: bool


def forward(net: Network, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    x = np.asarray(x, dtype=float)
    squeezed = x.ndim == 1
    if squeezed:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ContractError(
            f"input of shape {x.shape} does not match network input dim "
            f"{net.input_dim}")
    inputs, pre_acts, acts = [], [], []
    h = x
    for layer in net.layers:
        inputs.append(h)
        z = h @ layer.weights + layer.bias
        a = _act(layer.activation, z)
        pre_acts.append(z)
        acts.append(a)
        h = a
    out = h[0] if squeezed else h
    return out, ForwardCache(net=net, inputs=inputs, pre_acts=pre_acts,
                             acts=acts, squeezed=squeezed)


def backward(net: Network, cache: ForwardCache,
             dout: np.ndarray) -> list[np.ndarray]:
    """Gradients in net.parameters() order for upstream gradient dout."""
    if cache.net is not net:
        raise ContractError("cache does not belong to this network")
    dout = np.asarray(dout, dtype=float)
    if cache.squeezed and dout.ndim == 1:
        dout = dout[None, :]
    if dout.shape != cache.acts[-1].shape:
        raise ContractError(
            f"output gradient shape {dout.shape} does not match forward "
            f"output {cache.acts[-1].shape}")
    grads: list[np.ndarray] = [None] * (2 * len(net.layers))
    delta = dout
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        delta = delta * _act_grad(layer.activation, cache.pre_acts[i],
                                  cache.acts[i])
        grads[2 * i] = cache.inputs[i].T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ layer.weights.T
    return grads


def softmax(logits: np.ndarray) -> np.ndarray:
    """Stable softmax along the last axis; -inf logits map to probability 0."""
    z = np.asarray(logits, dtype=float)
    m = np.max(z, axis=-1, keepdims=True)
    e = np.exp(z - m)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class AdamState:
    alpha: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: list[np.ndarray], alpha: float = 3e-4,
                   beta1: float = 0.9, beta2: float = 0.999,
                   eps: float = 1e-8) -> "AdamState":
        return cls(alpha=alpha, beta1=beta1, beta2=beta2, eps=eps, t=0,
                   m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params])

    def copy(self) -> "AdamState":
        return AdamState(alpha=self.alpha, beta1=self.beta1, beta2=self.beta2,
                         eps=self.eps, t=self.t,
                         m=[a.copy() for a in self.m],
                         v=[a.copy() for a in self.v])


def adam_step(params: list[np.ndarray], grads: list[np.ndarray],
              state: AdamState) -> list[np.ndarray]:
    """One Adam update (minimization); returns new parameter arrays."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ContractError("params, grads, and Adam state lengths differ")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged("nonfinite gradient in Adam step")
    state.t += 1
    t = state.t
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = state.beta1 * state.m[i] + (1 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1 - state.beta2) * (g * g)
        m_hat = state.m[i] / (1 - state.beta1 ** t)
        v_hat = state.v[i] / (1 - state.beta2 ** t)
        out.append(p - state.alpha * m_hat / (np.sqrt(v_hat) + state.eps))
    return out


def apply_adam(net: Network, grads: list[np.ndarray], state: AdamState) -> None:
    net.set_parameters(adam_step(net.parameters(), grads, state))


# -- serialization -------------------------------------------------------
# JSON keeps floats via repr, which round-trips float64 exactly; that is
# what makes version rollback bit-exact.

def net_to_dict(net: Network) -> dict:
    return {
        "layers": [
            {"weights": layer.weights.tolist(),
             "bias": layer.bias.tolist(),
             "activation": layer.activation}
            for layer in net.layers
        ]
    }


def net_from_dict(d: dict) -> Network:
    try:
        layers = [Layer(weights=np.array(ld["weights"], dtype=float),
                        bias=np.array(ld["bias"], dtype=float),
                        activation=ld["activation"])
                  for ld in d["layers"]]
    except (KeyError, TypeError) as exc:
        raise ModelFormatError(f"bad network payload: {exc}") from exc
    return Network(layers=layers)


def adam_to_dict(state: AdamState) -> dict:
    return {
        "alpha": state.alpha, "beta1": state.beta1, "beta2": state.beta2,
        "eps": state.eps, "t": state.t,
        "m": [a.tolist() for a in state.m],
        "v": [a.tolist() for a in state.v],
    }


def adam_from_dict(d: dict) -> AdamState:
    try:
        return AdamState(alpha=d["alpha"], beta1=d["beta1"], beta2=d["beta2"],
                         eps=d["eps"], t=d["t"],
                         m=[np.array(a, dtype=float) for a in d["m"]],
                         v=[np.array(a, dtype=float) for a in d["v"]])
    except (KeyError, TypeError) as exc:
        raise ModelFormatError(f"bad Adam payload: {exc}") from exc
