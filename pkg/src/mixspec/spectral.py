"""Graph Laplacian of the fitted edge weights and the graph Fourier embedding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceFailure, DimensionMismatch, InvalidFeatureCount


def symmetrize_abs(theta, p: int | None = None) -> np.ndarray:
    """Symmetric nonnegative weight matrix with zero diagonal.

    ``theta`` is either a ``p x p`` matrix, averaged with its transpose,
    or a length ``p(p-1)/2`` edge vector in lexicographic pair order (then
    ``p`` is inferred if not given). Entries are made absolute.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.ndim == 1:
        m = theta.shape[0]
        if p is None:
            p = int(round((1 + np.sqrt(1 + 8 * m)) / 2))
        if p * (p - 1) // 2 != m:
            raise DimensionMismatch(f"{m} edge weights do not form a complete graph")
        w = np.zeros((p, p))
        s, t = np.triu_indices(p, k=1)
        w[s, t] = theta
        w[t, s] = theta
    elif theta.ndim == 2 and theta.shape[0] == theta.shape[1]:
        w = 0.5 * (theta + theta.T)
    else:
        raise DimensionMismatch(f"expected an edge vector or square matrix, got shape {theta.shape}")
    w = np.abs(w)
    np.fill_diagonal(w, 0.0)
    return w


def laplacian(w) -> np.ndarray:
    """``diag(w.sum(1)) - w``."""
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise DimensionMismatch(f"weight matrix must be square, got {w.shape}")
    return np.diag(w.sum(axis=1)) - w


def _fix_signs(vecs):
    """Make the largest-magnitude entry of each column positive (first index wins ties)."""
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def p(self):
        return self.eigenvalues.shape[0]

    def to_csv(self, path):
        """``index,eigenvalue`` rows followed by the eigenvector matrix (one row per variable)."""
        with open(path, "w") as fh:
            fh.write("index,eigenvalue\n")
            for j, lam in enumerate(self.eigenvalues):
                fh.write(f"{j},{lam!r}\n")

    def save(self, path):
        with open(path, "wb") as fh:
            np.savez(fh, eigenvalues=self.eigenvalues, eigenvectors=self.eigenvectors)

    @classmethod
    def load(cls, path):
        with np.load(path) as z:
            return cls(z["eigenvalues"], z["eigenvectors"])


def eigendecompose(delta) -> SpectralBasis:
    """Full symmetric eigendecomposition, eigenvalues ascending, signs fixed."""
    delta = np.asarray(delta, dtype=float)
    if delta.ndim != 2 or delta.shape[0] != delta.shape[1]:
        raise DimensionMismatch(f"Laplacian must be square, got {delta.shape}")
    try:
        vals, vecs = np.linalg.eigh(delta)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(f"symmetric eigensolver failed: {exc}") from exc
    order = np.argsort(vals, kind="stable")
    vals = vals[order]
    vecs = _fix_signs(vecs[:, order])
    vals.setflags(write=False)
    vecs.setflags(write=False)
    return SpectralBasis(vals, vecs)


def select_components(basis: SpectralBasis, n_features: int, order: str = "ascending",
                      drop_constant: bool = False) -> np.ndarray:
    """Indices of the eigenvectors used as features.

    ``order`` picks the smallest (``"ascending"``) or largest
    (``"descending"``) eigenvalues first. ``drop_constant`` skips the
    first zero-frequency eigenvector before taking ``n_features``.
    """
    p = basis.p
    if order not in ("ascending", "descending"):
        raise ValueError(f"order must be 'ascending' or 'descending', got {order!r}")
    idx = np.arange(p) if order == "ascending" else np.arange(p)[::-1]
    if drop_constant:
        idx = idx[idx != 0]
    if not 1 <= n_features <= len(idx):
        raise InvalidFeatureCount(f"n_features must be in [1, {len(idx)}], got {n_features}")
    return idx[:n_features]


def transform(data, basis: SpectralBasis, n_features: int, order: str = "ascending",
              drop_constant: bool = False) -> np.ndarray:
    """Graph Fourier coefficients ``Phi^T x`` of every row, restricted to ``n_features``.

    ``data`` is a MixedDataMatrix or an ``n x p`` array in variable order
    (numerical block first).
    """
    x = data.values if hasattr(data, "values") and not isinstance(data, np.ndarray) else data
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != basis.p:
        raise DimensionMismatch(f"data has {x.shape[-1]} columns, basis has {basis.p}")
    idx = select_components(basis, n_features, order, drop_constant)
    return x @ basis.eigenvectors[:, idx]


def embedding_to_csv(path, embedding, eigenvalues):
    """Header ``feature,eigenvalue`` block, then one row of coordinates per observation."""
    embedding = np.asarray(embedding)
    with open(path, "w") as fh:
        fh.write("feature,eigenvalue\n")
        for j, lam in enumerate(eigenvalues):
            fh.write(f"{j},{float(lam)!r}\n")
        fh.write(",".join(f"z{j}" for j in range(embedding.shape[1])) + "\n")
        np.savetxt(fh, embedding, delimiter=",", fmt="%.17g")
