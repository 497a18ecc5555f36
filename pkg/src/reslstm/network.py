"""Stacked recurrent networks with a softmax head and truncated BPTT."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .cells import (
    CellState, ConfigurationError, HighwayExtras, LayerParams, LstmCoreParams, ResidualExtras,
    StepCache, accumulate_grads, layer_step, step_deltas,
)
from .numerics import DTYPE, SEED_INIT, DimensionError, SeededStream, init_uniform, log_softmax

NET_KINDS = ("plain", "highway", "residual_scaled", "residual_unscaled")


@dataclass
class NetworkConfig:
    cell_kind: str = "plain"
    layers: int = 1
    cell_size: int = 8
    output_size: int = 4
    input_dim: int = 4
    num_classes: int = 4
    seed: int = 0
    init_scale: float = 0.05
    forget_bias: float = 1.0
    # "auto": identity shortcut wherever K == M; "matrix": always a learned W_short
    shortcut: str = "auto"

    def __post_init__(self):
        if self.cell_kind not in NET_KINDS:
            raise ConfigurationError(f"cell_kind must be one of {NET_KINDS}, got {self.cell_kind!r}")
        if self.shortcut not in ("auto", "matrix"):
            raise ConfigurationError(f"shortcut must be 'auto' or 'matrix', got {self.shortcut!r}")
        for name in ("layers", "cell_size", "output_size", "input_dim", "num_classes"):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError(f"{name} must be >= 1")

    def layer_input_dim(self, l: int) -> int:
        """Input width of 1-based layer ``l``."""
        return self.input_dim if l == 1 else self.output_size


@dataclass
class StackedNetwork:
    config: NetworkConfig
    layers: list[LayerParams]
    W_out: np.ndarray
    b_out: np.ndarray

    def named_tensors(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for l, layer in enumerate(self.layers, start=1):
            out += layer.named_tensors(prefix=f"layer{l}.")
        out += [("W_out", self.W_out), ("b_out", self.b_out)]
        return out

    def zeros_like(self) -> "StackedNetwork":
        return StackedNetwork(self.config, [lp.zeros_like() for lp in self.layers],
                              np.zeros_like(self.W_out), np.zeros_like(self.b_out))

    def copy(self) -> "StackedNetwork":
        return StackedNetwork(self.config, [lp.copy() for lp in self.layers],
                              self.W_out.copy(), self.b_out.copy())

    def astype(self, dtype) -> "StackedNetwork":
        """Copy with every tensor cast to ``dtype`` (the forward pass follows it)."""
        cast = lambda a: np.asarray(a, dtype=dtype).copy()  # noqa: E731
        return StackedNetwork(self.config, [lp._map(cast) for lp in self.layers],
                              cast(self.W_out), cast(self.b_out))

    @property
    def dtype(self):
        return self.W_out.dtype

    def num_params(self) -> int:
        return sum(t.size for _, t in self.named_tensors())

    def initial_states(self) -> list[CellState]:
        return [CellState(np.zeros(lp.core.N, self.dtype), np.zeros(lp.core.M, self.dtype))
                for lp in self.layers]


# Gradients mirror the network tensor-for-tensor.
Gradients = StackedNetwork


@dataclass
class ForwardTrace:
    caches: list[list[StepCache]] = field(default_factory=list)  # [t][l]
    logits: np.ndarray | None = None


def layer_kind(cell_kind: str, l: int) -> str:
    if cell_kind == "plain" or (cell_kind == "highway" and l == 1):
        return "plain"
    if cell_kind == "highway":
        return "highway"
    return "residual"


def build_network(config: NetworkConfig) -> StackedNetwork:
    """Randomly initialise a network; all draws come from one seeded stream in layer order."""
    rng = SeededStream(config.seed, SEED_INIT)
    N, M, scale = config.cell_size, config.output_size, config.init_scale
    layers = []
    for l in range(1, config.layers + 1):
        K = config.layer_input_dim(l)
        kind = layer_kind(config.cell_kind, l)
        core = LstmCoreParams.random(N, K, M, rng, scale, config.forget_bias)
        extras = None
        if kind == "highway":
            extras = HighwayExtras.random(N, K, rng, scale)
        elif kind == "residual":
            w = None
            if K != M or config.shortcut == "matrix":
                w = init_uniform(M, K, scale, rng)
            extras = ResidualExtras(W_short=w, scaled=config.cell_kind == "residual_scaled")
        layers.append(LayerParams(kind, core, extras))
    W_out = init_uniform(config.num_classes, M, scale, rng)
    b_out = np.zeros(config.num_classes, dtype=DTYPE)
    return StackedNetwork(config, layers, W_out, b_out)


def _as_inputs(net: StackedNetwork, inputs) -> np.ndarray:
    X = np.asarray(inputs, dtype=net.dtype)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DimensionError(f"inputs must be a non-empty T x D array, got shape {X.shape}")
    if X.shape[1] != net.config.input_dim:
        raise DimensionError(f"inputs have dim {X.shape[1]}, network expects {net.config.input_dim}")
    return X


def forward_sequence(net: StackedNetwork, inputs, initial_states: list[CellState] | None = None,
                     keep_trace: bool = True):
    """Run the stack over ``inputs`` (T x D).

    Layers are processed one at a time over the whole sequence; this is exact
    because layer l at time t only needs layer l-1 at the same t. Returns
    ``(logits, trace, final_states)``; ``trace`` is ``None`` when
    ``keep_trace`` is false.
    """
    X = _as_inputs(net, inputs)
    states = list(initial_states) if initial_states is not None else net.initial_states()
    if len(states) != len(net.layers):
        raise DimensionError(f"got {len(states)} initial states for {len(net.layers)} layers")
    T = X.shape[0]
    caches = [[None] * len(net.layers) for _ in range(T)] if keep_trace else None
    H, C_below = X, None
    for l, layer in enumerate(net.layers):
        if H.shape[1] != layer.core.K:
            raise DimensionError(f"layer {l + 1} expects input dim {layer.core.K}, got {H.shape[1]}")
        proj = H @ layer.core.W_in.T
        H_out = np.empty((T, layer.core.M), dtype=net.dtype)
        C_out = np.empty((T, layer.core.N), dtype=net.dtype)
        state = states[l]
        for t in range(T):
            state, cache = layer_step(layer, H[t], state,
                                      c_below=None if C_below is None else C_below[t], x_proj=proj[t])
            H_out[t], C_out[t] = state.h, state.c
            if keep_trace:
                caches[t][l] = cache
        states[l] = state
        H, C_below = H_out, C_out
    logits = H @ net.W_out.T + net.b_out
    trace = ForwardTrace(caches, logits) if keep_trace else None
    return logits, trace, states


def _check_labels(labels, T: int, C: int) -> np.ndarray:
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if y.shape[0] != T:
        raise DimensionError(f"{y.shape[0]} labels for {T} frames")
    if np.any(y < 0) or np.any(y >= C):
        raise ValueError(f"labels must lie in [0, {C}), got range [{y.min()}, {y.max()}]")
    return y


def backward_sequence(net: StackedNetwork, trace: ForwardTrace, d_logits: np.ndarray,
                      bptt_len: int | None = None) -> StackedNetwork:
    """Reverse pass given ``dL/dlogits`` (T x C).

    Recurrent gradients are cut at the start of every ``bptt_len`` chunk;
    ``None`` means full BPTT. Layers are swept top-down, each over all time
    steps, so the spatial gradient into layer l-1 is complete before that
    layer's own time loop starts.
    """
    grads = net.zeros_like()
    T = d_logits.shape[0]
    tops = np.array([caches[-1].h for caches in trace.caches])
    grads.W_out += d_logits.T @ tops
    grads.b_out += d_logits.sum(axis=0)
    d_H = d_logits @ net.W_out
    d_C_above = None
    for l in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[l]
        d_h_next = np.zeros(layer.core.M, dtype=net.dtype)
        d_c_next = np.zeros(layer.core.N, dtype=net.dtype)
        deltas = [None] * T
        for t in range(T - 1, -1, -1):
            d_c = d_c_next if d_C_above is None else d_c_next + d_C_above[t]
            st = step_deltas(layer, trace.caches[t][l], d_H[t] + d_h_next, d_c)
            deltas[t] = st
            if bptt_len is not None and t % bptt_len == 0:
                d_h_next = np.zeros_like(d_h_next)
                d_c_next = np.zeros_like(d_c_next)
            else:
                d_h_next, d_c_next = st.d_h_prev, st.d_c_prev
        column = [trace.caches[t][l] for t in range(T)]
        d_H = accumulate_grads(layer, grads.layers[l], column, deltas, need_input=l > 0)
        d_C_above = np.array([st.d_c_below for st in deltas]) if layer.kind == "highway" else None
    return grads


def loss_and_grads(net: StackedNetwork, inputs, labels, bptt_len: int = 20):
    """Per-frame mean cross-entropy and its exact truncated-BPTT gradient.

    The state (c, h) is carried across chunk boundaries; gradients are not.
    """
    if bptt_len < 1:
        raise ValueError(f"bptt_len must be >= 1, got {bptt_len}")
    logits, trace, _ = forward_sequence(net, inputs)
    T, C = logits.shape
    y = _check_labels(labels, T, C)
    logp = log_softmax(logits)
    loss = -float(np.mean(logp[np.arange(T), y]))
    d_logits = np.exp(logp)
    d_logits[np.arange(T), y] -= 1.0
    d_logits /= T
    return loss, backward_sequence(net, trace, d_logits, bptt_len)


def chunk_start_states(net: StackedNetwork, inputs, bptt_len: int) -> list[list[CellState]]:
    """States carried into each ``bptt_len`` chunk when running the whole sequence."""
    X = _as_inputs(net, inputs)
    starts = []
    states = net.initial_states()
    for s in range(0, X.shape[0], bptt_len):
        starts.append([CellState(st.c.copy(), st.h.copy()) for st in states])
        _, _, states = forward_sequence(net, X[s:s + bptt_len], states, keep_trace=False)
    return starts


def sequence_loss(net: StackedNetwork, inputs, labels, initial_states=None) -> float:
    """Per-frame mean cross-entropy, forward only."""
    logits, _, _ = forward_sequence(net, inputs, initial_states, keep_trace=False)
    T, C = logits.shape
    y = _check_labels(labels, T, C)
    return -np.mean(log_softmax(logits)[np.arange(T), y])


def save_checkpoint(net: StackedNetwork, path) -> None:
    """Write config + every tensor into an ``.npz`` container (shape headers are per-array)."""
    arrays = {name: t for name, t in net.named_tensors()}
    arrays["__config__"] = np.array(json.dumps(asdict(net.config), sort_keys=True))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> StackedNetwork:
    with np.load(Path(path), allow_pickle=False) as data:
        config = NetworkConfig(**json.loads(str(data["__config__"])))
        net = build_network(config)
        for name, t in net.named_tensors():
            stored = data[name]
            if stored.shape != t.shape:
                raise DimensionError(f"checkpoint tensor {name} has shape {stored.shape}, expected {t.shape}")
            t[...] = stored
    return net
