"""Collective nonnegative factorization of the numerical and categorical blocks.

Both blocks share the row factor ``W``::

    D_num ~ W @ H1,     D_cat01 ~ W @ H2,     W, H1, H2 >= 0

where ``D_cat01`` is the categorical block recoded to ``{0, 1}`` and, by
default, ``D_num`` is the scaled numerical block shifted by ``+beta`` onto
``[0, 2 beta]`` so that nonnegative factors can reach every entry. The
factors are fitted by projected stochastic gradient descent on the sum of
squared Frobenius residuals, one observation row per step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import MixedDataMatrix, min_max_scale
from .errors import ConstantColumn, DimensionMismatch, InvalidLatentDim, NonFiniteLoss


@dataclass(frozen=True, eq=False)
class FactorModel:
    W: np.ndarray
    H1: np.ndarray
    H2: np.ndarray

    def __post_init__(self):
        W, H1, H2 = (np.array(a, dtype=float, copy=True) for a in (self.W, self.H1, self.H2))
        if W.ndim != 2 or H1.ndim != 2 or H2.ndim != 2:
            raise DimensionMismatch("factors must be 2-D")
        k = W.shape[1]
        if H1.shape[0] != k or H2.shape[0] != k:
            raise DimensionMismatch(
                f"inner dimensions disagree: W {W.shape}, H1 {H1.shape}, H2 {H2.shape}"
            )
        if k < 1 or k >= H1.shape[1] + H2.shape[1]:
            raise InvalidLatentDim(f"need 1 <= k < p1 + p2, got k={k}")
        if min(W.min(initial=0), H1.min(initial=0), H2.min(initial=0)) < 0:
            raise ValueError("factors must be nonnegative")
        for name, a in (("W", W), ("H1", H1), ("H2", H2)):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def k(self):
        return self.W.shape[1]

    @property
    def n(self):
        return self.W.shape[0]

    @property
    def p1(self):
        return self.H1.shape[1]

    @property
    def p2(self):
        return self.H2.shape[1]


@dataclass(frozen=True)
class FactorizeConfig:
    """SGD hyperparameters. ``k=None`` resolves to ``ceil((p1 + p2) / 2)``."""

    k: int | None = None
    learning_rate: float = 0.05
    epochs: int = 200
    seed: int = 0
    init_scale: float = 0.1
    shift_numerical: bool = True

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if not self.init_scale > 0:
            raise ValueError(f"init_scale must be > 0, got {self.init_scale}")

    def resolve_k(self, p):
        return self.k if self.k is not None else default_latent_dim(p)


def default_latent_dim(p):
    return math.ceil(p / 2)


@dataclass(frozen=True)
class FactorizeTrace:
    """Objective (unsquared) at initialization and after every epoch."""

    objective: tuple[float, ...]
    min_entry: tuple[float, ...] = field(default=())


def _targets(data, shift_numerical=True):
    num = np.asarray(data.num_block, dtype=float)
    if shift_numerical:
        num = num + data.beta
    return num, np.asarray(data.cat01, dtype=float)


def _check_dims(W, H1, H2, num, cat):
    if W.shape[0] != num.shape[0] or num.shape[0] != cat.shape[0]:
        raise DimensionMismatch(f"W has {W.shape[0]} rows, data has {num.shape[0]}")
    if H1.shape[1] != num.shape[1] or H2.shape[1] != cat.shape[1]:
        raise DimensionMismatch(
            f"H1/H2 widths {H1.shape[1]}/{H2.shape[1]} vs data {num.shape[1]}/{cat.shape[1]}"
        )


def objective_arrays(W, H1, H2, num, cat01):
    """``||num - W H1||_F + ||cat01 - W H2||_F`` on raw arrays."""
    _check_dims(W, H1, H2, num, cat01)
    return float(np.linalg.norm(num - W @ H1) + np.linalg.norm(cat01 - W @ H2))


def objective(model: FactorModel, data: MixedDataMatrix, shift_numerical: bool = True) -> float:
    """Unsquared collective objective; the categorical block enters as ``{0, 1}``."""
    num, cat = _targets(data, shift_numerical)
    return objective_arrays(model.W, model.H1, model.H2, num, cat)


def surrogate_loss(W, H1, H2, num, cat01):
    """Sum of squared Frobenius residuals, the function SGD actually descends."""
    r1 = num - W @ H1
    r2 = cat01 - W @ H2
    return float(np.sum(r1 * r1) + np.sum(r2 * r2))


def surrogate_gradient(W, H1, H2, num, cat01):
    """Full-batch gradient of :func:`surrogate_loss` w.r.t. ``(W, H1, H2)``."""
    r1 = num - W @ H1
    r2 = cat01 - W @ H2
    gW = -2.0 * (r1 @ H1.T + r2 @ H2.T)
    gH1 = -2.0 * (W.T @ r1)
    gH2 = -2.0 * (W.T @ r2)
    return gW, gH1, gH2


def initial_factors(n, p1, p2, config: FactorizeConfig):
    """Uniform ``(0, init_scale]`` initialization drawn from ``config.seed``."""
    k = config.resolve_k(p1 + p2)
    if k < 1 or k >= p1 + p2:
        raise InvalidLatentDim(f"latent dimension must satisfy 1 <= k < p1 + p2 = {p1 + p2}, got {k}")
    rng = np.random.default_rng(config.seed)
    s = config.init_scale
    # 1 - U[0, 1) lies in (0, 1]
    W = s * (1.0 - rng.random((n, k)))
    H1 = s * (1.0 - rng.random((k, p1)))
    H2 = s * (1.0 - rng.random((k, p2)))
    return W, H1, H2


def factorize(data: MixedDataMatrix, config: FactorizeConfig = FactorizeConfig(),
              return_trace: bool = False, step_callback=None):
    """Fit ``W, H1, H2`` by projected per-row SGD.

    Each epoch visits the rows in a seeded random order. A step on row ``i``
    updates ``W[i]``, ``H1`` and ``H2`` from the same residuals, then clamps
    negatives to zero. The best epoch (by objective) is returned, so the
    final objective never exceeds the initial one.

    ``step_callback(W, H1, H2)``, if given, sees the live factors after
    every projected step (read them, do not mutate them).
    """
    num, cat = _targets(data, config.shift_numerical)
    return factorize_arrays(num, cat, config, return_trace=return_trace,
                            step_callback=step_callback)


def factorize_arrays(num, cat01, config: FactorizeConfig = FactorizeConfig(),
                     return_trace: bool = False, step_callback=None):
    num = np.asarray(num, dtype=float)
    cat01 = np.asarray(cat01, dtype=float)
    n, p1 = num.shape
    p2 = cat01.shape[1]
    W, H1, H2 = initial_factors(n, p1, p2, config)
    lr = config.learning_rate
    order_rng = np.random.default_rng([config.seed, 1])

    best = objective_arrays(W, H1, H2, num, cat01)
    best_factors = (W.copy(), H1.copy(), H2.copy())
    objectives = [best]
    mins = [min(W.min(), H1.min(), H2.min())]
    for _ in range(config.epochs):
        for i in order_rng.permutation(n):
            w = W[i]
            r1 = num[i] - w @ H1
            r2 = cat01[i] - w @ H2
            gw = H1 @ r1 + H2 @ r2
            H1 += (2.0 * lr) * np.outer(w, r1)
            H2 += (2.0 * lr) * np.outer(w, r2)
            w += (2.0 * lr) * gw
            np.maximum(w, 0.0, out=w)
            np.maximum(H1, 0.0, out=H1)
            np.maximum(H2, 0.0, out=H2)
            if step_callback is not None:
                step_callback(W, H1, H2)
        obj = objective_arrays(W, H1, H2, num, cat01)
        if not math.isfinite(obj):
            raise NonFiniteLoss(
                f"objective became non-finite; learning_rate={lr} is too large"
            )
        objectives.append(obj)
        mins.append(min(W.min(), H1.min(), H2.min()))
        if obj < best:
            best = obj
            best_factors = (W.copy(), H1.copy(), H2.copy())
    model = FactorModel(*best_factors)
    if return_trace:
        return model, FactorizeTrace(tuple(objectives), tuple(mins))
    return model


@dataclass(frozen=True, eq=False)
class DenseMaps:
    """Reconstructions ``W H1`` and ``W H2``, each column scaled onto ``[-beta, beta]``."""

    xhat_num: np.ndarray
    xhat_cat: np.ndarray
    beta: float

    @property
    def values(self):
        return np.hstack([self.xhat_num, self.xhat_cat])


def dense_maps(model: FactorModel, beta: float = 1.0) -> DenseMaps:
    try:
        num, _ = min_max_scale(model.W @ model.H1, beta)
        cat, _ = min_max_scale(model.W @ model.H2, beta)
    except ConstantColumn as exc:
        raise ConstantColumn(f"degenerate factorization: {exc}") from None
    for a in (num, cat):
        a.setflags(write=False)
    return DenseMaps(num, cat, float(beta))


def save_factor_model(path, model: FactorModel):
    """Flat text layout: a ``n k p1 p2`` header line, then W, H1, H2 row by row."""
    with open(path, "w") as fh:
        fh.write(f"{model.n} {model.k} {model.p1} {model.p2}\n")
        for block in (model.W, model.H1, model.H2):
            np.savetxt(fh, block, fmt="%.17g")


def load_factor_model(path) -> FactorModel:
    with open(path) as fh:
        n, k, p1, p2 = (int(x) for x in fh.readline().split())
        rows = [[float(v) for v in line.split()] for line in fh if line.strip()]
    if len(rows) != n + 2 * k:
        raise DimensionMismatch(f"{path}: expected {n + 2 * k} rows, found {len(rows)}")
    try:
        W = np.array(rows[:n], dtype=float).reshape(n, k)
        H1 = np.array(rows[n:n + k], dtype=float).reshape(k, p1)
        H2 = np.array(rows[n + k:], dtype=float).reshape(k, p2)
    except ValueError:
        raise DimensionMismatch(f"{path}: block widths disagree with header") from None
    return FactorModel(W, H1, H2)
