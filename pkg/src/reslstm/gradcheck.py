"""Central finite-difference oracle for the analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import (
    NetworkConfig, build_network, chunk_start_states, loss_and_grads, sequence_loss,
)
from .numerics import SeededStream

REL_FLOOR = 1e-8


def _named(obj) -> list[tuple[str, np.ndarray]]:
    if hasattr(obj, "named_tensors"):
        return obj.named_tensors()
    if isinstance(obj, dict):
        return sorted(obj.items())
    return [("value", np.atleast_1d(np.asarray(obj, dtype=float)))]


def numeric_grad(objective, params, eps: float = 1e-5):
    """Central differences ``(f(p+eps) - f(p-eps)) / (2 eps)`` for every scalar of ``params``.

    ``params`` is perturbed in place and restored; ``objective`` is called
    with ``params``. Returns an object shaped like ``params`` (a zero-like
    network for networks, an array for arrays).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if hasattr(params, "zeros_like"):
        out = params.zeros_like()
        pairs = zip(params.named_tensors(), out.named_tensors())
    else:
        if not isinstance(params, np.ndarray) or params.dtype.kind != "f":
            raise TypeError("numeric_grad needs a float array or an object with named_tensors()")
        out = np.zeros_like(params)
        pairs = [(("value", params), ("value", out))]
    for (name, t), (_, g) in pairs:
        flat, gflat = t.reshape(-1), g.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + eps
            fp = objective(params)
            flat[k] = orig - eps
            fm = objective(params)
            flat[k] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise FloatingPointError(f"objective non-finite when perturbing {name}[{k}]")
            gflat[k] = (fp - fm) / (2.0 * eps)
    return out


def rel_errors(a, b) -> dict[str, float]:
    """Per-tensor max of ``|a-b| / max(|a|, |b|, 1e-8)``."""
    na, nb = _named(a), _named(b)
    if [n for n, _ in na] != [n for n, _ in nb]:
        raise ValueError("gradient structures differ")
    out = {}
    for (name, x), (_, y) in zip(na, nb):
        if x.shape != y.shape:
            raise ValueError(f"shape mismatch for {name}: {x.shape} vs {y.shape}")
        denom = np.maximum(np.maximum(np.abs(x), np.abs(y)), REL_FLOOR)
        out[name] = float(np.max(np.abs(x - y) / denom)) if x.size else 0.0
    return out


def max_rel_error(a, b) -> float:
    return max(rel_errors(a, b).values(), default=0.0)


@dataclass
class GradCheckReport:
    cell_kind: str
    dims: dict
    seed: int
    threshold: float
    per_tensor: dict[str, float] = field(default_factory=dict)

    @property
    def global_max(self) -> float:
        return max(self.per_tensor.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.global_max < self.threshold

    def format(self) -> str:
        dims = " ".join(f"{k}={v}" for k, v in self.dims.items())
        lines = [f"gradcheck {self.cell_kind} {dims} seed={self.seed}",
                 f"{'tensor':<22} {'max_rel_err':>12}"]
        lines += [f"{name:<22} {err:>12.3e}" for name, err in self.per_tensor.items()]
        verdict = "PASS" if self.passed else "FAIL"
        lines.append(f"{'global max':<22} {self.global_max:>12.3e}  {verdict} (threshold {self.threshold:g})")
        return "\n".join(lines)


def truncated_objective(net, inputs, labels, bptt_len: int):
    """Objective whose exact gradient is the truncated-BPTT gradient at ``net``.

    Chunk start states are computed once at the current parameters and held
    constant, so perturbations only act inside each chunk.
    """
    X = np.asarray(inputs, dtype=net.dtype)
    y = np.asarray(labels)
    T = X.shape[0]
    starts = chunk_start_states(net, X, bptt_len)

    def objective(p) -> float:
        total = 0.0
        for k, s in enumerate(range(0, T, bptt_len)):
            seg = slice(s, s + bptt_len)
            n = X[seg].shape[0]
            total += sequence_loss(p, X[seg], y[seg], starts[k]) * n
        return total / T

    return objective


def check_cell(cell_kind: str, N: int, K: int, M: int, T: int, seed: int, threshold: float = 1e-4,
               layers: int = 1, shortcut: str = "auto", bptt_len: int | None = None,
               num_classes: int = 3, eps: float = 1e-5, init_scale: float = 0.5,
               corrupt: bool = False, oracle_dtype=np.longdouble) -> GradCheckReport:
    """Compare analytic and numeric gradients of the mean cross-entropy on a random net.

    The analytic pass runs in float64. The finite-difference objective is
    evaluated on a copy cast to ``oracle_dtype`` (extended precision by
    default) so its round-off floor sits well below the smallest gradients.
    ``corrupt`` perturbs the analytic result; it exists as a negative control.
    """
    config = NetworkConfig(cell_kind=cell_kind, layers=layers, cell_size=N, output_size=M,
                           input_dim=K, num_classes=num_classes, seed=seed,
                           init_scale=init_scale, forget_bias=0.0, shortcut=shortcut)
    net = build_network(config)
    rng = SeededStream(seed, 17)
    X = rng.normal((T, K))
    y = rng.integers(num_classes, T)
    bptt = T if bptt_len is None else bptt_len
    _, analytic = loss_and_grads(net, X, y, bptt)
    if corrupt:
        analytic.layers[0].core.W_in *= 1.01
    probe = net.astype(oracle_dtype)
    objective = truncated_objective(probe, X.astype(oracle_dtype), y, bptt)
    numeric = numeric_grad(objective, probe, eps)
    report = GradCheckReport(cell_kind, {"N": N, "K": K, "M": M, "T": T, "layers": layers,
                                         "shortcut": shortcut, "bptt": bptt},
                             seed, threshold)
    report.per_tensor = rel_errors(analytic, numeric)
    return report
