"""Bounded per-observation similarity between the values of two variables.

For a pair of variables ``(s, t)`` observed on one row:

* both categorical: the product ``x_s * x_t`` of the ``+1/-1`` codes;
* both numerical: ``g(x_s, x_t)`` on the scaled values;
* one of each: ``g`` applied to the dense (factorization) maps of both.

``g`` is the signed magnitude ratio ``min(|u|,|z|) / max(|u|,|z|)``,
truncated near zero by ``eps`` so that tiny values do not flip the sign.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import MixedDataMatrix
from .errors import DimensionMismatch, IndexOutOfRange, SelfPair
from .factorization import DenseMaps


@dataclass(frozen=True)
class SimilarityConfig:
    epsilon: float = 0.05

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")

    def check_beta(self, beta):
        if not self.epsilon < beta:
            raise ValueError(f"epsilon must be below beta ({self.epsilon} >= {beta})")


def g(u, z, eps):
    """Truncated ratio similarity; scalar in, float out, arrays broadcast.

    ====================================  ==================================
    condition                             value
    ====================================  ==================================
    ``min(|u|,|z|) > eps``                ``min/max * sign(u*z)``
    ``min <= eps < max``                  ``eps / max``
    ``max(|u|,|z|) <= eps``               ``1``
    ====================================  ==================================
    """
    scalar = np.ndim(u) == 0 and np.ndim(z) == 0
    au = np.abs(np.asarray(u, dtype=float))
    az = np.abs(np.asarray(z, dtype=float))
    lo = np.minimum(au, az)
    hi = np.maximum(au, az)
    safe_hi = np.where(hi > eps, hi, 1.0)
    main = lo / safe_hi * np.sign(np.asarray(u, dtype=float) * np.asarray(z, dtype=float))
    out = np.where(lo > eps, main, np.where(hi > eps, eps / safe_hi, 1.0))
    return float(out) if scalar else out


def edge_list(p):
    """All unordered pairs ``(s, t)``, ``s < t``, in lexicographic order, shape ``(m, 2)``."""
    s, t = np.triu_indices(p, k=1)
    return np.column_stack([s, t])


def edge_column(s, t, p):
    """Column of pair ``(s, t)`` in :func:`edge_list` order (argument order irrelevant)."""
    if s == t:
        raise SelfPair(f"no edge from a variable to itself (s = t = {s})")
    if not (0 <= s < p and 0 <= t < p):
        raise IndexOutOfRange(f"variable index out of range for p={p}: ({s}, {t})")
    s, t = min(s, t), max(s, t)
    return s * p - s * (s + 1) // 2 + (t - s - 1)


@dataclass(frozen=True, eq=False)
class SimilarityTensor:
    """``values[i, e]`` is h on observation ``i`` for edge ``edges[e]``."""

    values: np.ndarray
    p: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise DimensionMismatch("similarity values must be 2-D")
        if v.shape[1] != self.p * (self.p - 1) // 2:
            raise DimensionMismatch(
                f"{v.shape[1]} columns, but p={self.p} implies {self.p * (self.p - 1) // 2} edges"
            )
        # read-only view; avoids copying large tensors
        v = v.view()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def m(self):
        return self.values.shape[1]

    @property
    def edges(self):
        return edge_list(self.p)

    def column(self, s, t):
        return edge_column(s, t, self.p)

    def to_csv(self, path):
        header = ",".join(f"{s}-{t}" for s, t in self.edges)
        np.savetxt(path, self.values, delimiter=",", header=header, comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path):
        with open(path) as fh:
            header = fh.readline().strip()
        values = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        m = len(header.split(","))
        p = int(round((1 + np.sqrt(1 + 8 * m)) / 2))
        return cls(values.reshape(-1, m), p)


def _check_inputs(data, maps):
    if maps.xhat_num.shape != data.num_block.shape or maps.xhat_cat.shape != data.cat_block.shape:
        raise DimensionMismatch(
            f"dense maps {maps.xhat_num.shape}/{maps.xhat_cat.shape} do not match data "
            f"{data.num_block.shape}/{data.cat_block.shape}"
        )


def pair_similarity(i, s, t, data: MixedDataMatrix, maps: DenseMaps,
                    cfg: SimilarityConfig = SimilarityConfig()) -> float:
    """Similarity of variables ``s`` and ``t`` on row ``i``; symmetric in ``(s, t)``."""
    _check_inputs(data, maps)
    cfg.check_beta(data.beta)
    edge_column(s, t, data.p)  # validates s != t and the range
    if not 0 <= i < data.n:
        raise IndexOutOfRange(f"row {i} out of range for n={data.n}")
    s, t = min(s, t), max(s, t)
    cat_s, cat_t = data.is_categorical(s), data.is_categorical(t)
    if cat_s and cat_t:
        x = data.cat_block[i]
        return float(x[s - data.p1] * x[t - data.p1])
    if not cat_s and not cat_t:
        x = data.num_block[i]
        return g(x[s], x[t], cfg.epsilon)
    xhat = maps.values[i]
    return g(xhat[s], xhat[t], cfg.epsilon)


def similarity_tensor(data: MixedDataMatrix, maps: DenseMaps,
                      cfg: SimilarityConfig = SimilarityConfig(),
                      chunk_edges: int = 1024) -> SimilarityTensor:
    """Evaluate every row on every edge of the complete graph over the ``p`` variables."""
    _check_inputs(data, maps)
    cfg.check_beta(data.beta)
    x = data.values
    xhat = maps.values
    p1 = data.p1
    edges = edge_list(data.p)
    out = np.empty((data.n, len(edges)))
    for lo in range(0, len(edges), chunk_edges):
        s = edges[lo:lo + chunk_edges, 0]
        t = edges[lo:lo + chunk_edges, 1]
        both_cat = (s >= p1) & (t >= p1)
        both_num = (s < p1) & (t < p1)
        block = out[:, lo:lo + len(s)]
        idx = np.flatnonzero(both_cat)
        block[:, idx] = x[:, s[idx]] * x[:, t[idx]]
        idx = np.flatnonzero(both_num)
        block[:, idx] = g(x[:, s[idx]], x[:, t[idx]], cfg.epsilon)
        idx = np.flatnonzero(~both_cat & ~both_num)
        block[:, idx] = g(xhat[:, s[idx]], xhat[:, t[idx]], cfg.epsilon)
    return SimilarityTensor(out, data.p)
