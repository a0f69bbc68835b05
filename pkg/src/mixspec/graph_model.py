"""Edge weights of the pairwise model ``f(x) ~ exp(sum_e theta_e h_e(x))``.

The normalizer is the empirical sum over the observed rows, which gives
the pseudo log-likelihood::

    logL(theta) = sum_i s_i - n * log(sum_i exp(s_i)),   s = H @ theta

``fit`` maximizes it by gradient ascent with optional backtracking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput, DimensionMismatch, NonFiniteLikelihood
from .similarity import SimilarityTensor


def _values(H):
    return H.values if isinstance(H, SimilarityTensor) else np.asarray(H, dtype=float)


def _check(theta, Hv):
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1 or Hv.ndim != 2 or theta.shape[0] != Hv.shape[1]:
        raise DimensionMismatch(
            f"theta of shape {theta.shape} does not match {Hv.shape[1] if Hv.ndim == 2 else '?'} edges"
        )
    return theta


def edge_scores(theta, H) -> np.ndarray:
    """``s_i = sum_e theta_e * H[i, e]``."""
    Hv = _values(H)
    theta = _check(theta, Hv)
    return Hv @ theta


def _logsumexp(s):
    top = np.max(s)
    return top + math.log(np.sum(np.exp(s - top)))


def pseudo_log_likelihood(theta, H) -> float:
    Hv = _values(H)
    s = edge_scores(theta, Hv)
    n = s.shape[0]
    if n < 1:
        raise DegenerateInput("need at least one observation")
    return float(np.sum(s) - n * _logsumexp(s))


def gradient(theta, H) -> np.ndarray:
    """``sum_i H[i] - n * softmax(s) @ H``, the exact gradient of the pseudo log-likelihood."""
    Hv = _values(H)
    s = edge_scores(theta, Hv)
    n = s.shape[0]
    w = np.exp(s - np.max(s))
    w /= np.sum(w)
    return Hv.sum(axis=0) - n * (w @ Hv)


@dataclass(frozen=True)
class FitConfig:
    learning_rate: float = 1e-3
    max_iter: int = 2000
    tol: float = 1e-5
    init_scale: float = 0.01
    seed: int = 0
    l2: float = 0.0
    backtracking: bool = True
    max_halvings: int = 20

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if not self.tol > 0:
            raise ValueError(f"tol must be > 0, got {self.tol}")
        if not self.init_scale > 0:
            raise ValueError(f"init_scale must be > 0, got {self.init_scale}")
        if self.l2 < 0:
            raise ValueError(f"l2 must be >= 0, got {self.l2}")


@dataclass(frozen=True)
class FitTrace:
    """Objective and gradient inf-norm at the start of every iteration."""

    log_likelihood: tuple[float, ...]
    grad_norm: tuple[float, ...]
    converged: bool
    stop_reason: str
    final_learning_rate: float

    @property
    def n_iter(self):
        return len(self.log_likelihood)

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("iteration,log_likelihood,grad_norm\n")
            for i, (f, gn) in enumerate(zip(self.log_likelihood, self.grad_norm)):
                fh.write(f"{i},{f!r},{gn!r}\n")

    def summary(self):
        return {
            "n_iter": self.n_iter,
            "converged": self.converged,
            "stop_reason": self.stop_reason,
            "initial_log_likelihood": self.log_likelihood[0],
            "final_log_likelihood": self.log_likelihood[-1],
            "final_grad_norm": self.grad_norm[-1],
            "final_learning_rate": self.final_learning_rate,
        }


def initial_theta(m, cfg: FitConfig):
    """Zero-mean Gaussian start; the origin itself is a stationary point."""
    return np.random.default_rng(cfg.seed).normal(0.0, cfg.init_scale, size=m)


def fit(H, cfg: FitConfig = FitConfig()):
    """Maximize the (optionally L2-penalized) pseudo log-likelihood.

    Iterates ``theta <- theta + eta * grad`` until the gradient inf-norm
    drops below ``cfg.tol`` or ``cfg.max_iter`` is reached. With
    backtracking, a step that lowers the objective is retried with ``eta``
    halved (at most ``max_halvings`` times) and the reduced ``eta`` is kept
    for later iterations; if no halving helps the fit stops.

    Returns ``(theta, FitTrace)``.
    """
    Hv = _values(H)
    n, m = Hv.shape
    if n < 2:
        raise DegenerateInput(f"fitting needs n >= 2 observations, got {n}")
    lam = cfg.l2
    colsum = Hv.sum(axis=0)

    def evaluate(theta):
        # overflow shows up as a non-finite objective, handled by the caller
        with np.errstate(over="ignore", invalid="ignore"):
            s = Hv @ theta
            top = np.max(s)
            if not math.isfinite(top):
                return -math.inf, None
            w = np.exp(s - top)
            z = np.sum(w)
            f = float(np.sum(s) - n * (top + math.log(z))) - 0.5 * lam * float(theta @ theta)
        return f, w / z

    def grad_from(theta, w):
        return colsum - n * (w @ Hv) - lam * theta

    theta = initial_theta(m, cfg)
    f, w = evaluate(theta)
    if not math.isfinite(f):
        raise NonFiniteLikelihood("pseudo log-likelihood is non-finite at the initial point")
    eta = cfg.learning_rate
    lls, norms = [], []
    converged, reason = False, "max_iter"
    for _ in range(cfg.max_iter):
        grad = grad_from(theta, w)
        gnorm = float(np.max(np.abs(grad))) if m else 0.0
        lls.append(f)
        norms.append(gnorm)
        if gnorm < cfg.tol:
            converged, reason = True, "tolerance"
            break
        step = eta
        accepted = None
        for _ in range(cfg.max_halvings + 1 if cfg.backtracking else 1):
            cand = theta + step * grad
            fc, wc = evaluate(cand)
            if not cfg.backtracking or (math.isfinite(fc) and fc >= f):
                accepted = (cand, fc, wc)
                break
            step *= 0.5
        if accepted is None:
            reason = "no_ascent"
            break
        theta, f, w = accepted
        if not math.isfinite(f):
            raise NonFiniteLikelihood(
                f"pseudo log-likelihood diverged; learning_rate={cfg.learning_rate} is too large"
            )
        eta = step
    trace = FitTrace(tuple(lls), tuple(norms), converged, reason, eta)
    return theta, trace


def save_theta(path, theta, p):
    """``s,t,theta`` rows in edge order."""
    s, t = np.triu_indices(p, k=1)
    theta = np.asarray(theta, dtype=float)
    if theta.shape != s.shape:
        raise DimensionMismatch(f"{theta.shape[0]} weights for a {p}-node complete graph")
    with open(path, "w") as fh:
        fh.write("s,t,theta\n")
        for a, b, w in zip(s, t, theta):
            fh.write(f"{a},{b},{float(w)!r}\n")


def load_theta(path):
    """Inverse of :func:`save_theta`; returns ``(theta, p)``."""
    arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    m = arr.shape[0]
    p = int(round((1 + np.sqrt(1 + 8 * m)) / 2))
    s, t = np.triu_indices(p, k=1)
    if p * (p - 1) // 2 != m or not (np.array_equal(arr[:, 0], s) and np.array_equal(arr[:, 1], t)):
        raise DimensionMismatch(f"{path}: rows are not a complete edge list in lexicographic order")
    return arr[:, 2].copy(), p
