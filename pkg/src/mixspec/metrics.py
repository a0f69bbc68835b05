"""Feature-space and clustering quality measures.

* eigen diffusion: flatness of a covariance spectrum, ``(sum l)^2 / (l * sum l^2)``;
* cluster separability: ``tr(S_between) / tr(S_total)``;
* Rand index over all unordered pairs of observations;
* total cluster entropy, summed over clusters without size weights.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import AllZeroSpectrum, DegenerateInput, LengthMismatch, ZeroTotalScatter


def covariance_eigenvalues(points) -> np.ndarray:
    """Descending eigenvalues of the sample covariance (divisor ``n - 1``)."""
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n < 2:
        raise DegenerateInput(f"covariance needs n >= 2 points, got {n}")
    xc = x - x.mean(axis=0)
    cov = xc.T @ xc / (n - 1)
    vals = np.linalg.eigvalsh(cov)[::-1]
    return np.where(vals < 0, np.where(vals >= -1e-10, 0.0, vals), vals)


def eigen_diffusion(eigs) -> float:
    lam = np.asarray(eigs, dtype=float).ravel()
    if lam.size == 0 or not np.any(lam > 0):
        raise AllZeroSpectrum("eigen diffusion needs at least one positive eigenvalue")
    total = math.fsum(lam)
    return total * total / (lam.size * math.fsum(lam * lam))


def _labels_of(assignment):
    return np.asarray(getattr(assignment, "labels", assignment))


def cluster_separability(points, assignment) -> float:
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    labels = _labels_of(assignment)
    if labels.shape[0] != x.shape[0]:
        raise LengthMismatch(f"{labels.shape[0]} labels for {x.shape[0]} points")
    mu = x.mean(axis=0)
    total = float(np.sum((x - mu) ** 2))
    if not total > 0:
        raise ZeroTotalScatter("all points coincide; separability undefined")
    between = 0.0
    for c in np.unique(labels):
        members = x[labels == c]
        d = members.mean(axis=0) - mu
        between += members.shape[0] * float(d @ d)
    return between / total


def _pair_counts(truth, clusters):
    """(a, b, c, d) pair counts from the contingency table, as Python ints."""
    truth = np.asarray(truth)
    clusters = np.asarray(clusters)
    if truth.shape != clusters.shape or truth.ndim != 1:
        raise LengthMismatch(f"label vectors differ in shape: {truth.shape} vs {clusters.shape}")
    _, ti = np.unique(truth, return_inverse=True)
    _, ci = np.unique(clusters, return_inverse=True)
    table = np.zeros((ti.max() + 1, ci.max() + 1), dtype=np.int64)
    np.add.at(table, (ti, ci), 1)

    def pairs(v):
        v = v.astype(object)
        return int(sum(x * (x - 1) // 2 for x in v.ravel()))

    n = truth.shape[0]
    total = n * (n - 1) // 2
    a = pairs(table)
    same_class = pairs(table.sum(axis=1))
    same_cluster = pairs(table.sum(axis=0))
    b = same_class - a
    c = same_cluster - a
    d = total - a - b - c
    return a, b, c, d


def rand_index(truth, clusters) -> float:
    truth = np.asarray(truth)
    clusters = _labels_of(clusters)
    if truth.shape[0] < 2:
        raise DegenerateInput("Rand index needs at least 2 observations")
    a, b, c, d = _pair_counts(truth, clusters)
    return (a + d) / (a + b + c + d)


def cluster_entropy(truth, clusters) -> float:
    """``-sum_c sum_j p_cj log p_cj`` with ``p_cj`` the class-``j`` share of cluster ``c``."""
    truth = np.asarray(truth)
    clusters = _labels_of(clusters)
    if truth.shape != clusters.shape:
        raise LengthMismatch(f"label vectors differ in shape: {truth.shape} vs {clusters.shape}")
    terms = []
    for c in np.unique(clusters):
        members = truth[clusters == c]
        size = members.shape[0]
        _, counts = np.unique(members, return_counts=True)
        for k in counts:
            q = int(k) / size
            terms.append(q * math.log(q))
    return -math.fsum(terms) + 0.0


@dataclass
class MetricsReport:
    alpha: float | None = None
    separability_j: float | None = None
    rand_index: float | None = None
    entropy: float | None = None
    context: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.alpha is not None and not 0 < self.alpha <= 1 + 1e-12:
            raise ValueError(f"alpha out of range: {self.alpha}")
        if self.separability_j is not None and not -1e-12 <= self.separability_j <= 1 + 1e-12:
            raise ValueError(f"J out of range: {self.separability_j}")
        if self.rand_index is not None and not 0 <= self.rand_index <= 1:
            raise ValueError(f"Rand index out of range: {self.rand_index}")
        if self.entropy is not None and self.entropy < 0:
            raise ValueError(f"entropy must be nonnegative: {self.entropy}")

    def to_dict(self):
        return asdict(self)

    def to_row(self):
        row = dict(self.context)
        row.update(alpha=self.alpha, J=self.separability_j, R=self.rand_index, E=self.entropy)
        return row


def evaluate(points, labels, truth=None, context=None) -> MetricsReport:
    """All four measures for one clustering of one feature space."""
    eigs = covariance_eigenvalues(points)
    alpha = eigen_diffusion(eigs)
    labels = _labels_of(labels)
    j = cluster_separability(points, labels)
    r = e = None
    if truth is not None:
        r = rand_index(truth, labels)
        e = cluster_entropy(truth, labels)
    return MetricsReport(alpha, j, r, e, dict(context or {}))
