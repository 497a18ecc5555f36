"""Plain, highway and residual LSTM steps with exact reverse-mode backward.

Gate pre-activations are stored fused: ``W_in`` is ``(4N, K)`` and ``W_rec``
is ``(4N, M)`` with row blocks ordered input, forget, candidate, output.
The per-gate matrices (``W_xi``, ``W_hf``, ...) are exposed as views of
those blocks, so updating a view updates the fused tensor.

Peepholes are elementwise vectors. The output gate peeps at the *new* cell
value while the input and forget gates peep at the previous one.

Residual cells compute ``r = tanh(c)``, ``m = W_p r`` and then

* scaled:   ``h = o_out * (m + s)``
* unscaled: ``h = o_out * m + s``

where ``s`` is the layer input (identity shortcut) or ``W_short @ x``.
The output gate ``o`` lives in cell space (N units) exactly as in a plain
LSTM; ``o_out`` is its block average onto the M output units (the identity
when N == M), which keeps every gate value in (0, 1) and adds no
parameters.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from .numerics import DTYPE, DimensionError, SeededStream, init_uniform, sigmoid

KINDS = ("plain", "highway", "residual")


class ConfigurationError(ValueError):
    """A cell or network was configured inconsistently."""


def _blocks(arr: np.ndarray, n: int) -> list[np.ndarray]:
    return [arr[k * n:(k + 1) * n] for k in range(4)]


@dataclass
class LstmCoreParams:
    W_in: np.ndarray   # (4N, K)
    W_rec: np.ndarray  # (4N, M)
    b: np.ndarray      # (4N,)
    p_ci: np.ndarray   # (N,)
    p_cf: np.ndarray   # (N,)
    p_co: np.ndarray   # (N,)
    W_p: np.ndarray    # (M, N)

    def __post_init__(self):
        N, M = self.N, self.M
        K = self.W_in.shape[1]
        expected = {
            "W_in": (4 * N, K), "W_rec": (4 * N, M), "b": (4 * N,),
            "p_ci": (N,), "p_cf": (N,), "p_co": (N,), "W_p": (M, N),
        }
        for name, shape in expected.items():
            got = getattr(self, name).shape
            if got != shape:
                raise DimensionError(f"LstmCoreParams.{name} has shape {got}, expected {shape}")

    @property
    def N(self) -> int:
        return self.W_p.shape[1]

    @property
    def M(self) -> int:
        return self.W_p.shape[0]

    @property
    def K(self) -> int:
        return self.W_in.shape[1]

    W_xi = property(lambda self: _blocks(self.W_in, self.N)[0])
    W_xf = property(lambda self: _blocks(self.W_in, self.N)[1])
    W_xc = property(lambda self: _blocks(self.W_in, self.N)[2])
    W_xo = property(lambda self: _blocks(self.W_in, self.N)[3])
    W_hi = property(lambda self: _blocks(self.W_rec, self.N)[0])
    W_hf = property(lambda self: _blocks(self.W_rec, self.N)[1])
    W_hc = property(lambda self: _blocks(self.W_rec, self.N)[2])
    W_ho = property(lambda self: _blocks(self.W_rec, self.N)[3])
    b_i = property(lambda self: _blocks(self.b, self.N)[0])
    b_f = property(lambda self: _blocks(self.b, self.N)[1])
    b_c = property(lambda self: _blocks(self.b, self.N)[2])
    b_o = property(lambda self: _blocks(self.b, self.N)[3])

    @classmethod
    def zeros(cls, N: int, K: int, M: int) -> "LstmCoreParams":
        z = lambda *s: np.zeros(s, dtype=DTYPE)  # noqa: E731
        return cls(z(4 * N, K), z(4 * N, M), z(4 * N), z(N), z(N), z(N), z(M, N))

    @classmethod
    def random(cls, N: int, K: int, M: int, rng: SeededStream, scale: float = 0.05,
               forget_bias: float = 1.0) -> "LstmCoreParams":
        p = cls(
            W_in=init_uniform(4 * N, K, scale, rng),
            W_rec=init_uniform(4 * N, M, scale, rng),
            b=init_uniform(1, 4 * N, scale, rng).reshape(-1),
            p_ci=init_uniform(1, N, scale, rng).reshape(-1),
            p_cf=init_uniform(1, N, scale, rng).reshape(-1),
            p_co=init_uniform(1, N, scale, rng).reshape(-1),
            W_p=init_uniform(M, N, scale, rng),
        )
        p.b_f[:] += forget_bias
        return p


@dataclass
class HighwayExtras:
    W_xd: np.ndarray        # (N, K)
    p_cd_same: np.ndarray   # (N,) peephole on c_{t-1} of this layer
    p_cd_below: np.ndarray  # (N,) peephole on c_t of the layer below
    b_d: np.ndarray         # (N,)

    @classmethod
    def zeros(cls, N: int, K: int) -> "HighwayExtras":
        return cls(np.zeros((N, K)), np.zeros(N), np.zeros(N), np.zeros(N))

    @classmethod
    def random(cls, N: int, K: int, rng: SeededStream, scale: float = 0.05) -> "HighwayExtras":
        return cls(
            W_xd=init_uniform(N, K, scale, rng),
            p_cd_same=init_uniform(1, N, scale, rng).reshape(-1),
            p_cd_below=init_uniform(1, N, scale, rng).reshape(-1),
            b_d=init_uniform(1, N, scale, rng).reshape(-1),
        )


@dataclass
class ResidualExtras:
    """Shortcut description; ``W_short=None`` is the identity shortcut (needs K == M)."""

    W_short: Optional[np.ndarray] = None  # (M, K)
    scaled: bool = True

    @property
    def identity(self) -> bool:
        return self.W_short is None


@dataclass
class LayerParams:
    """One recurrent layer: its cell kind, core tensors and kind-specific extras."""

    kind: str
    core: LstmCoreParams
    extras: HighwayExtras | ResidualExtras | None = None
    _pool: Optional[np.ndarray] = field(default=None, init=False, repr=False, compare=False)
    _signature: tuple = field(default=(), init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown cell kind {self.kind!r}")
        N, K, M = self.core.N, self.core.K, self.core.M
        if self.kind == "highway":
            if not isinstance(self.extras, HighwayExtras):
                raise ConfigurationError("highway layer needs HighwayExtras")
            if self.extras.W_xd.shape != (N, K):
                raise DimensionError(f"W_xd has shape {self.extras.W_xd.shape}, expected {(N, K)}")
            for name in ("p_cd_same", "p_cd_below", "b_d"):
                if getattr(self.extras, name).shape != (N,):
                    raise DimensionError(f"{name} must have length {N}")
        elif self.kind == "residual":
            if not isinstance(self.extras, ResidualExtras):
                raise ConfigurationError("residual layer needs ResidualExtras")
            if self.extras.identity and K != M:
                raise ConfigurationError(f"identity shortcut needs K == M, got K={K}, M={M}")
            if not self.extras.identity and self.extras.W_short.shape != (M, K):
                raise DimensionError(f"W_short has shape {self.extras.W_short.shape}, expected {(M, K)}")
            if N < M:
                raise ConfigurationError(f"residual cells need N >= M, got N={N}, M={M}")
            self._pool = gate_pool(N, M)
        elif self.extras is not None:
            raise ConfigurationError("plain layer takes no extras")
        scaled = self.extras.scaled if self.kind == "residual" else None
        identity = self.extras.identity if self.kind == "residual" else None
        self._signature = (self.kind, N, K, M, scaled, identity)

    @property
    def signature(self) -> tuple:
        """Shape/kind fingerprint checked when a cache is fed back to backward."""
        return self._signature

    def named_tensors(self, prefix: str = "") -> list[tuple[str, np.ndarray]]:
        out = [(prefix + f.name, getattr(self.core, f.name)) for f in fields(self.core)]
        if self.kind == "highway":
            out += [(prefix + f.name, getattr(self.extras, f.name)) for f in fields(self.extras)]
        elif self.kind == "residual" and not self.extras.identity:
            out.append((prefix + "W_short", self.extras.W_short))
        return out

    def zeros_like(self) -> "LayerParams":
        return self._map(np.zeros_like)

    def copy(self) -> "LayerParams":
        return self._map(np.copy)

    def _map(self, fn) -> "LayerParams":
        core = LstmCoreParams(**{f.name: fn(getattr(self.core, f.name)) for f in fields(self.core)})
        extras = self.extras
        if isinstance(extras, HighwayExtras):
            extras = HighwayExtras(**{f.name: fn(getattr(extras, f.name)) for f in fields(extras)})
        elif isinstance(extras, ResidualExtras):
            w = None if extras.identity else fn(extras.W_short)
            extras = ResidualExtras(W_short=w, scaled=extras.scaled)
        return LayerParams(self.kind, core, extras)


def gate_pool(N: int, M: int) -> Optional[np.ndarray]:
    """``(M, N)`` block-averaging matrix mapping cell-space gates onto output units.

    Cells are split into M contiguous, near-equal groups; ``None`` when N == M.
    """
    if N == M:
        return None
    pool = np.zeros((M, N), dtype=DTYPE)
    for j, idx in enumerate(np.array_split(np.arange(N), M)):
        pool[j, idx] = 1.0 / len(idx)
    return pool


@dataclass
class CellState:
    c: np.ndarray
    h: np.ndarray

    @classmethod
    def zeros(cls, N: int, M: int) -> "CellState":
        return cls(np.zeros(N, dtype=DTYPE), np.zeros(M, dtype=DTYPE))


@dataclass
class StepCache:
    signature: tuple
    x: np.ndarray
    c_prev: np.ndarray
    h_prev: np.ndarray
    c_below: Optional[np.ndarray]
    i: np.ndarray
    f: np.ndarray
    g: np.ndarray
    o: np.ndarray
    d: Optional[np.ndarray]
    c: np.ndarray
    tanh_c: np.ndarray
    r: np.ndarray
    m: np.ndarray
    h: np.ndarray
    o_out: Optional[np.ndarray] = None
    s: Optional[np.ndarray] = None


def _check_inputs(core: LstmCoreParams, x: np.ndarray, prev: CellState) -> None:
    if x.shape != (core.K,):
        raise DimensionError(f"x has shape {x.shape}, layer expects ({core.K},)")
    if prev.c.shape != (core.N,) or prev.h.shape != (core.M,):
        raise DimensionError(
            f"previous state shapes c={prev.c.shape}, h={prev.h.shape}; expected ({core.N},), ({core.M},)")


def _forward(layer: LayerParams, x, prev: CellState, c_below=None, x_proj=None):
    p = layer.core
    N = p.N
    _check_inputs(p, x, prev)
    a = p.W_in @ x if x_proj is None else x_proj.copy()
    a += p.W_rec @ prev.h
    a += p.b
    c_prev = prev.c
    i = sigmoid(a[:N] + p.p_ci * c_prev)
    f = sigmoid(a[N:2 * N] + p.p_cf * c_prev)
    g = np.tanh(a[2 * N:3 * N])
    c = f * c_prev + i * g
    d = None
    if layer.kind == "highway":
        if c_below is None or c_below.shape != (N,):
            raise DimensionError(f"highway step needs c_below of length {N}")
        e = layer.extras
        d = sigmoid(e.W_xd @ x + e.p_cd_same * c_prev + e.p_cd_below * c_below + e.b_d)
        c += d * c_below
    o = sigmoid(a[3 * N:] + p.p_co * c)
    tanh_c = np.tanh(c)
    o_out = s = None
    if layer.kind == "residual":
        e = layer.extras
        r = tanh_c
        m = p.W_p @ r
        s = x if e.identity else e.W_short @ x
        o_out = o if layer._pool is None else layer._pool @ o
        h = o_out * (m + s) if e.scaled else o_out * m + s
    else:
        r = o * tanh_c
        m = p.W_p @ r
        h = m
    cache = StepCache(layer.signature, x, c_prev, prev.h, c_below, i, f, g, o, d, c, tanh_c,
                      r, m, h, o_out, s)
    return CellState(c, h), cache


def plain_step(params: LstmCoreParams, x: np.ndarray, prev: CellState) -> tuple[CellState, StepCache]:
    return _forward(LayerParams("plain", params), x, prev)


def highway_step(params: LstmCoreParams, extras: HighwayExtras, x: np.ndarray, prev: CellState,
                 c_below: np.ndarray) -> tuple[CellState, StepCache]:
    return _forward(LayerParams("highway", params, extras), x, prev, c_below=c_below)


def residual_step(params: LstmCoreParams, extras: ResidualExtras, x: np.ndarray,
                  prev: CellState) -> tuple[CellState, StepCache]:
    return _forward(LayerParams("residual", params, extras), x, prev)


def layer_step(layer: LayerParams, x, prev: CellState, c_below=None, x_proj=None):
    """Dispatch on ``layer.kind``; ``x_proj`` optionally supplies a precomputed ``W_in @ x``."""
    return _forward(layer, x, prev, c_below=c_below, x_proj=x_proj)


@dataclass
class StepDeltas:
    """Local reverse-mode quantities of one step, before any parameter reduction."""

    da: np.ndarray              # (4N,) gate pre-activation deltas
    d_m: np.ndarray             # (M,) delta on the projection output W_p r
    d_h_prev: np.ndarray
    d_c_prev: np.ndarray
    dz_d: Optional[np.ndarray] = None     # highway depth-gate pre-activation
    d_c_below: Optional[np.ndarray] = None
    d_s: Optional[np.ndarray] = None      # residual shortcut output


def step_deltas(layer: LayerParams, cache: StepCache, d_h: np.ndarray, d_c_in: np.ndarray) -> StepDeltas:
    if cache.signature != layer.signature:
        raise ConfigurationError(f"cache signature {cache.signature} does not match layer {layer.signature}")
    p = layer.core
    o, i, f, g = cache.o, cache.i, cache.f, cache.g
    d_s = None
    if layer.kind == "residual":
        u = cache.m + cache.s if layer.extras.scaled else cache.m
        d_o = d_h * u if layer._pool is None else layer._pool.T @ (d_h * u)
        d_m = d_h * cache.o_out
        d_s = d_m if layer.extras.scaled else d_h
        d_tanh_c = p.W_p.T @ d_m
    else:
        d_m = d_h
        d_r = p.W_p.T @ d_h
        d_o = d_r * cache.tanh_c
        d_tanh_c = d_r * o

    dz_o = d_o * o * (1.0 - o)
    d_c = d_c_in + d_tanh_c * (1.0 - cache.tanh_c ** 2) + dz_o * p.p_co
    dz_i = d_c * g * i * (1.0 - i)
    dz_f = d_c * cache.c_prev * f * (1.0 - f)
    dz_g = d_c * i * (1.0 - g * g)
    d_c_prev = d_c * f + dz_i * p.p_ci + dz_f * p.p_cf
    da = np.concatenate((dz_i, dz_f, dz_g, dz_o))
    out = StepDeltas(da, d_m, p.W_rec.T @ da, d_c_prev, d_s=d_s)
    if layer.kind == "highway":
        e, dd = layer.extras, cache.d
        out.dz_d = dz_d = d_c * cache.c_below * dd * (1.0 - dd)
        out.d_c_below = d_c * dd + dz_d * e.p_cd_below
        out.d_c_prev = d_c_prev + dz_d * e.p_cd_same
    return out


def accumulate_grads(layer: LayerParams, grads: LayerParams, caches: list[StepCache],
                     deltas: list[StepDeltas], need_input: bool = True) -> Optional[np.ndarray]:
    """Reduce the deltas of a run of steps into ``grads``; returns ``dL/dx`` per step (T x K).

    Every parameter gradient is a sum over steps, so the reduction is done
    with one matrix product per tensor.
    """
    p, gp = layer.core, grads.core
    N = p.N
    X = np.array([c.x for c in caches])
    DA = np.array([d.da for d in deltas])
    C_prev = np.array([c.c_prev for c in caches])
    gp.W_in += DA.T @ X
    gp.W_rec += DA.T @ np.array([c.h_prev for c in caches])
    gp.b += DA.sum(axis=0)
    gp.W_p += np.array([d.d_m for d in deltas]).T @ np.array([c.r for c in caches])
    gp.p_ci += np.einsum("tn,tn->n", DA[:, :N], C_prev)
    gp.p_cf += np.einsum("tn,tn->n", DA[:, N:2 * N], C_prev)
    gp.p_co += np.einsum("tn,tn->n", DA[:, 3 * N:], np.array([c.c for c in caches]))
    d_X = DA @ p.W_in if need_input else None
    if layer.kind == "highway":
        e, ge = layer.extras, grads.extras
        DZ = np.array([d.dz_d for d in deltas])
        ge.W_xd += DZ.T @ X
        ge.p_cd_same += np.einsum("tn,tn->n", DZ, C_prev)
        ge.p_cd_below += np.einsum("tn,tn->n", DZ, np.array([c.c_below for c in caches]))
        ge.b_d += DZ.sum(axis=0)
        if need_input:
            d_X += DZ @ e.W_xd
    elif layer.kind == "residual":
        DS = np.array([d.d_s for d in deltas])
        if layer.extras.identity:
            if need_input:
                d_X += DS
        else:
            grads.extras.W_short += DS.T @ X
            if need_input:
                d_X += DS @ layer.extras.W_short
    return d_X


def layer_backward(layer: LayerParams, cache: StepCache, d_h: np.ndarray, d_c_in: np.ndarray,
                   grads: LayerParams, accumulate_input: bool = True):
    """Backward through one step, accumulating parameter gradients into ``grads``.

    Returns ``(d_x, d_h_prev, d_c_prev, d_c_below)``.
    """
    st = step_deltas(layer, cache, d_h, d_c_in)
    d_X = accumulate_grads(layer, grads, [cache], [st], need_input=accumulate_input)
    d_x = None if d_X is None else d_X[0]
    return d_x, st.d_h_prev, st.d_c_prev, st.d_c_below


def step_backward(cell_kind: str, params: LstmCoreParams, extras, cache: StepCache,
                  d_h: np.ndarray, d_c_in: np.ndarray, grads: LayerParams | None = None):
    """Exact gradients of one step.

    Returns ``(grads, d_x, d_h_prev, d_c_prev, d_c_below)``; ``d_c_below`` is
    ``None`` except for highway cells.
    """
    layer = LayerParams(cell_kind, params, extras)
    if grads is None:
        grads = layer.zeros_like()
    d_x, d_h_prev, d_c_prev, d_c_below = layer_backward(layer, cache, d_h, d_c_in, grads)
    return grads, d_x, d_h_prev, d_c_prev, d_c_below


def tensor_shapes(kind: str, N: int, K: int, M: int, identity: bool = True) -> dict[str, tuple]:
    """Declared tensor shapes of one layer, matching :meth:`LayerParams.named_tensors`."""
    shapes = {"W_in": (4 * N, K), "W_rec": (4 * N, M), "b": (4 * N,), "p_ci": (N,),
              "p_cf": (N,), "p_co": (N,), "W_p": (M, N)}
    if kind == "highway":
        shapes.update(W_xd=(N, K), p_cd_same=(N,), p_cd_below=(N,), b_d=(N,))
    elif kind == "residual" and not identity:
        shapes["W_short"] = (M, K)
    elif kind not in KINDS:
        raise ConfigurationError(f"unknown cell kind {kind!r}")
    return shapes
