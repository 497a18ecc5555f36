"""Parameter accounting and Monte-Carlo variance propagation for stacked cells.

Residual networks add ``y = F(x) + x``; highway networks gate the bypass with
``T(x) * H(x) + (1 - T(x)) * x``. For LSTM stacks the residual variant reuses
the projection and output gate, so its only extra tensor is a shortcut
matrix where the layer input and output widths differ, whereas highway LSTM
pays for a depth gate on every layer above the first.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .cells import tensor_shapes
from .network import NET_KINDS, layer_kind
from .numerics import SeededStream


def _size(shape) -> int:
    return math.prod(shape)


def layer_counts(cell_kind: str, L: int, N: int, M: int, D: int) -> list[int]:
    """Scalar parameter count of each layer of a ``cell_kind`` stack (auto shortcuts)."""
    counts = []
    for l in range(1, L + 1):
        K = D if l == 1 else M
        kind = layer_kind(cell_kind, l)
        shapes = tensor_shapes(kind, N, K, M, identity=K == M)
        counts.append(sum(_size(s) for s in shapes.values()))
    return counts


def highway_extras(N: int, K: int) -> int:
    """Depth-gate parameters one highway layer adds over a plain layer."""
    plain = tensor_shapes("plain", N, K, 1)
    highway = tensor_shapes("highway", N, K, 1)
    return sum(_size(s) for name, s in highway.items() if name not in plain)


def paper_reduction_formula(N: int) -> int:
    """Closed-form per-layer saving ``N**2/2 + 4N`` quoted for output width N/2."""
    if N % 2:
        raise ValueError(f"N must be even, got {N}")
    return N * N // 2 + 4 * N


@dataclass
class ParamCountReport:
    cell_kind: str
    dims: dict
    include_head: bool
    per_layer: dict[str, list[int]] = field(default_factory=dict)
    head: int = 0

    def total_for(self, kind: str) -> int:
        return sum(self.per_layer[kind]) + (self.head if self.include_head else 0)

    @property
    def total(self) -> int:
        return self.total_for(self.cell_kind)

    @property
    def highway_minus_residual(self) -> int:
        return self.total_for("highway") - self.total_for("residual_scaled")

    @property
    def relative_reduction(self) -> float:
        """Fraction of highway parameters saved by the residual stack."""
        return self.highway_minus_residual / self.total_for("highway")

    @property
    def shape_extras(self) -> int:
        """Highway extras of one layer with K == M (matched widths, as in the reduction formula)."""
        return highway_extras(self.dims["N"], self.dims["M"])

    def format(self) -> str:
        d = self.dims
        lines = [f"parameter counts N={d['N']} M={d['M']} D={d['D']} layers={d['L']}"
                 + (f" head C={d['C']}" if self.include_head else ""),
                 f"{'kind':<20} {'per-layer (first, rest)':>28} {'total':>14}"]
        for kind in NET_KINDS:
            per = self.per_layer[kind]
            rest = f"{per[1]:,}" if len(per) > 1 else "-"
            lines.append(f"{kind:<20} {f'{per[0]:,}, {rest}':>28} {self.total_for(kind):>14,}")
        lines.append(f"highway extras per layer (shape count, K=M): {self.shape_extras:,}")
        N = d["N"]
        if N % 2 == 0:
            formula = paper_reduction_formula(N)
            lines.append(f"reduction formula N^2/2+4N:                  {formula:,}")
            lines.append(f"formula minus shape count: {formula - self.shape_extras:,} scalars")
        lines.append(f"highway - residual: {self.highway_minus_residual:,} "
                     f"({100 * self.relative_reduction:.2f}% of highway)")
        plain = self.total_for("plain")
        lines.append(f"highway - plain:    {self.total_for('highway') - plain:,} "
                     f"({100 * (self.total_for('highway') - plain) / self.total_for('highway'):.2f}% of highway)")
        return "\n".join(lines)


def count_params(cell_kind: str, L: int, N: int, M: int, D: int, C: int = 0,
                 include_head: bool = False) -> ParamCountReport:
    """Exact counts from declared shapes for every cell kind; ``cell_kind`` selects ``.total``."""
    if cell_kind not in NET_KINDS:
        raise ValueError(f"cell_kind must be one of {NET_KINDS}")
    if min(L, N, M, D) < 1 or (include_head and C < 1):
        raise ValueError("dimensions must be positive")
    report = ParamCountReport(cell_kind, {"L": L, "N": N, "M": M, "D": D, "C": C}, include_head)
    for kind in NET_KINDS:
        report.per_layer[kind] = layer_counts(kind, L, N, M, D)
    report.head = C * M + C
    return report


@dataclass
class VarianceReport:
    variances: list[float]
    gate: float
    scaled: bool
    samples: int
    seed: int

    def closed_form(self) -> list[float]:
        return closed_form_variance(len(self.variances), self.gate, self.scaled)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("layer", "variance"))
            for l, v in enumerate(self.variances, start=1):
                w.writerow((l, repr(v)))


def closed_form_variance(L: int, gate: float, scaled: bool) -> list[float]:
    """Per-layer output variance for independent unit-variance m^k and x."""
    g2 = gate * gate
    out = []
    var = 1.0  # the network input
    for _ in range(L):
        var = g2 * (1.0 + var) if scaled else g2 + var
        out.append(var)
    return out


MIN_SAMPLES = 10_000


def variance_sweep(L: int, gate: float, scaled: bool, samples: int = 100_000,
                   seed: int = 0) -> VarianceReport:
    """Sample variance of each layer output with the output gate frozen at ``gate``.

    scaled: ``h^l = gate * (m^l + h^(l-1))``; unscaled: ``h^l = gate * m^l + h^(l-1)``,
    with ``h^0 = x`` and all ``m^l``, ``x`` i.i.d. standard normal.
    """
    if samples < MIN_SAMPLES or not 0 < gate <= 1 or L < 1:
        raise ValueError(f"need samples >= {MIN_SAMPLES}, 0 < gate <= 1 and L >= 1")
    rng = SeededStream(seed)
    draws = rng.normal((L + 1, samples))
    h = draws[0]
    variances = []
    for l in range(1, L + 1):
        h = gate * (draws[l] + h) if scaled else gate * draws[l] + h
        variances.append(float(np.var(h, ddof=1)))
    return VarianceReport(variances, gate, scaled, samples, seed)
