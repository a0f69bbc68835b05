"""K-means on feature spaces plus the mixed-data baselines.

* :func:`kmeans` - Lloyd iterations with k-means++ seeding.
* :func:`pca_features` - naive principal component features.
* :func:`kprototype` - Huang's k-prototypes (numerical means + categorical modes).
* :func:`gower_dissimilarity` and :func:`kmedoid` - PAM (BUILD + SWAP).

Every algorithm takes a seed and is deterministic for it. Restarts draw
their generators from ``SeedSequence(seed).spawn(n_init)`` and the best
objective wins, ties going to the earliest restart.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AsymmetricInput, DimensionMismatch, InvalidFeatureCount, TooManyClusters


@dataclass(frozen=True, eq=False)
class ClusterAssignment:
    labels: np.ndarray
    n_clusters: int
    cost: float
    n_iter: int = 0
    history: tuple[float, ...] = ()
    medoids: tuple[int, ...] | None = None
    empty: tuple[int, ...] = field(default=())

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("row,cluster\n")
            for i, c in enumerate(self.labels):
                fh.write(f"{i},{int(c)}\n")

    @classmethod
    def from_csv(cls, path, n_clusters=None):
        arr = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
        labels = arr[np.argsort(arr[:, 0]), 1]
        L = int(labels.max()) + 1 if n_clusters is None else n_clusters
        return cls(labels, L, float("nan"))


def _check_k(L, n):
    if L < 1:
        raise TooManyClusters(f"need at least one cluster, got {L}")
    if L > n:
        raise TooManyClusters(f"{L} clusters requested for {n} points")


def _sq_dist(x, centers):
    diff = x[:, None, :] - centers[None, :, :]
    return np.einsum("ilk,ilk->il", diff, diff)


class _EuclideanSpace:
    def __init__(self, x):
        self.x = np.asarray(x, dtype=float)
        self.n = self.x.shape[0]

    def costs(self, centers):
        return _sq_dist(self.x, centers)

    def from_points(self, idx):
        return self.x[np.asarray(idx)].copy()

    def update(self, labels, centers):
        out = centers.copy()
        for c in range(centers.shape[0]):
            members = labels == c
            if members.any():
                out[c] = self.x[members].mean(axis=0)
        return out


class _PrototypeSpace:
    """Numerical part compared by squared distance, categorical by mismatches."""

    def __init__(self, num, codes, gamma):
        self.num = np.asarray(num, dtype=float)
        self.codes = np.asarray(codes, dtype=np.int64)
        self.gamma = float(gamma)
        self.n = self.num.shape[0]

    def costs(self, centers):
        cnum, ccodes = centers
        mism = (self.codes[:, None, :] != ccodes[None, :, :]).sum(axis=2)
        return _sq_dist(self.num, cnum) + self.gamma * mism

    def from_points(self, idx):
        idx = np.asarray(idx)
        return self.num[idx].copy(), self.codes[idx].copy()

    def update(self, labels, centers):
        cnum, ccodes = centers[0].copy(), centers[1].copy()
        for c in range(cnum.shape[0]):
            members = labels == c
            if members.any():
                cnum[c] = self.num[members].mean(axis=0)
                for g in range(self.codes.shape[1]):
                    # shift by one so a missing level (-1) can be counted
                    ccodes[c, g] = np.bincount(self.codes[members, g] + 1).argmax() - 1
        return cnum, ccodes


def _plusplus(space, L, rng):
    """k-means++ seeding under the space's own cost; returns point indices."""
    n = space.n
    chosen = [int(rng.integers(n))]
    best = space.costs(space.from_points(chosen))[:, 0]
    while len(chosen) < L:
        total = best.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=best / total))
        else:
            free = np.setdiff1d(np.arange(n), chosen)
            nxt = int(free[rng.integers(free.size)])
        chosen.append(nxt)
        best = np.minimum(best, space.costs(space.from_points([nxt]))[:, 0])
    return chosen


def _lloyd(space, L, rng, max_iters):
    centers = space.from_points(_plusplus(space, L, rng))
    labels = None
    history = []
    empty_seen = set()
    for it in range(1, max_iters + 1):
        D = space.costs(centers)
        new = np.argmin(D, axis=1)
        current = D[np.arange(space.n), new]
        sizes = np.bincount(new, minlength=L)
        for c in np.flatnonzero(sizes == 0):
            # move the worst-served point into the empty cluster
            donors = sizes[new] > 1
            far = int(np.argmax(np.where(donors, current, -np.inf)))
            sizes[new[far]] -= 1
            new[far] = c
            sizes[c] = 1
            current[far] = 0.0
            empty_seen.add(int(c))
            centers = _set_center(space, centers, c, far)
        history.append(float(np.sum(current)))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        centers = space.update(labels, centers)
    return labels, history, it, tuple(sorted(empty_seen))


def _set_center(space, centers, c, point):
    fresh = space.from_points([point])
    if isinstance(centers, tuple):
        out = tuple(a.copy() for a in centers)
        for a, f in zip(out, fresh):
            a[c] = f[0]
        return out
    out = centers.copy()
    out[c] = fresh[0]
    return out


def _best_of(space, L, seed, n_init, max_iters):
    best = None
    for r, child in enumerate(np.random.SeedSequence(seed).spawn(n_init)):
        labels, history, n_iter, empty = _lloyd(space, L, np.random.default_rng(child), max_iters)
        cost = history[-1]
        if best is None or cost < best.cost:
            best = ClusterAssignment(labels, L, cost, n_iter, tuple(history), empty=empty)
    return best


def kmeans(points, n_clusters: int, seed: int = 0, max_iters: int = 300,
           n_init: int = 10) -> ClusterAssignment:
    """Lloyd's algorithm; ``cost`` is the inertia and ``history`` its per-iteration values."""
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    _check_k(n_clusters, x.shape[0])
    return _best_of(_EuclideanSpace(x), n_clusters, seed, n_init, max_iters)


def default_gamma(num_block):
    """Huang's rule: half the mean per-column standard deviation of the numerical block."""
    return 0.5 * float(np.mean(np.std(np.asarray(num_block, dtype=float), axis=0)))


def kprototype(data, n_clusters: int, gamma: float | None = None, seed: int = 0,
               max_iters: int = 300, n_init: int = 10) -> ClusterAssignment:
    """k-prototypes on a MixedDataMatrix.

    Cost of a point against a prototype: squared Euclidean distance on the
    numerical block plus ``gamma`` times the number of original
    categorical variables whose level differs from the prototype's mode.
    """
    _check_k(n_clusters, data.n)
    if gamma is None:
        gamma = default_gamma(data.num_block)
    if gamma < 0:
        raise ValueError(f"gamma must be nonnegative, got {gamma}")
    space = _PrototypeSpace(data.num_block, data.categorical_codes(), gamma)
    return _best_of(space, n_clusters, seed, n_init, max_iters)


def _sign_fix(vecs):
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def principal_axes(x):
    """Descending eigenvalues and sign-fixed eigenvectors of the sample covariance."""
    x = np.asarray(x, dtype=float)
    xc = x - x.mean(axis=0)
    cov = xc.T @ xc / (x.shape[0] - 1)
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals, kind="stable")[::-1]
    return vals[order], _sign_fix(vecs[:, order])


def pca_features(data, n_features: int) -> np.ndarray:
    """Centered data projected on the top ``n_features`` covariance eigenvectors."""
    x = data.values if not isinstance(data, np.ndarray) else data
    x = np.asarray(x, dtype=float)
    p = x.shape[1]
    if not 1 <= n_features <= p:
        raise InvalidFeatureCount(f"n_features must be in [1, {p}], got {n_features}")
    _, vecs = principal_axes(x)
    return (x - x.mean(axis=0)) @ vecs[:, :n_features]


def gower_dissimilarity(data) -> np.ndarray:
    """Mean over variables of range-normalized |difference| (numerical) and 0/1 mismatch (categorical).

    Categorical variables are the original ones (``data.categorical_groups``),
    not their individual indicator columns.
    """
    num = np.asarray(data.num_block, dtype=float)
    codes = data.categorical_codes()
    n = num.shape[0]
    out = np.zeros((n, n))
    for j in range(num.shape[1]):
        col = num[:, j]
        rng = col.max() - col.min()
        if rng > 0:
            out += np.abs(col[:, None] - col[None, :]) / rng
    for g in range(codes.shape[1]):
        col = codes[:, g]
        out += col[:, None] != col[None, :]
    out /= num.shape[1] + codes.shape[1]
    np.fill_diagonal(out, 0.0)
    return out


def _check_diss(d):
    d = np.asarray(d, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise DimensionMismatch(f"dissimilarity matrix must be square, got {d.shape}")
    if not np.allclose(d, d.T, rtol=0, atol=1e-12) or np.any(np.diag(d) != 0):
        raise AsymmetricInput("dissimilarity matrix must be symmetric with zero diagonal")
    return d


def _nearest_two(d, medoids):
    sub = d[:, medoids]
    order = np.argsort(sub, axis=1, kind="stable")
    rows = np.arange(d.shape[0])
    nearest = order[:, 0]
    dn = sub[rows, nearest]
    ds = sub[rows, order[:, 1]] if len(medoids) > 1 else np.full(d.shape[0], np.inf)
    return nearest, dn, ds


def _build(d, L):
    n = d.shape[0]
    medoids = [int(np.argmin(d.sum(axis=1)))]
    dn = d[:, medoids[0]].copy()
    while len(medoids) < L:
        gain = np.maximum(dn[:, None] - d, 0.0).sum(axis=0)
        gain[medoids] = -np.inf
        c = int(np.argmax(gain))
        medoids.append(c)
        dn = np.minimum(dn, d[:, c])
    return medoids


def _swap(d, medoids, max_swaps):
    n = d.shape[0]
    medoids = list(medoids)
    L = len(medoids)
    history = []
    scale = max(float(np.max(d)), 1.0)
    for _ in range(max_swaps):
        nearest, dn, ds = _nearest_two(d, medoids)
        history.append(float(dn.sum()))
        if L == n:
            break
        closer = np.minimum(d, dn[:, None])
        base = (closer - dn[:, None]).sum(axis=0)
        best_delta, best_pair = 0.0, None
        is_medoid = np.zeros(n, dtype=bool)
        is_medoid[medoids] = True
        for slot in range(L):
            own = nearest == slot
            extra = (np.minimum(d[own], ds[own, None]) - closer[own]).sum(axis=0)
            delta = base + extra
            delta[is_medoid] = np.inf
            c = int(np.argmin(delta))
            if delta[c] < best_delta - 1e-12 * scale:
                best_delta, best_pair = float(delta[c]), (slot, c)
        if best_pair is None:
            break
        medoids[best_pair[0]] = best_pair[1]
    nearest, dn, _ = _nearest_two(d, medoids)
    return medoids, nearest, float(dn.sum()), history


def kmedoid(diss, n_clusters: int, seed: int = 0, n_init: int = 10,
            max_swaps: int = 1000) -> ClusterAssignment:
    """PAM on a precomputed dissimilarity matrix.

    Restart 0 starts from the BUILD medoids; further restarts start from
    seeded random medoid sets. Each runs the steepest-descent SWAP phase.
    """
    d = _check_diss(diss)
    n = d.shape[0]
    _check_k(n_clusters, n)
    best = None
    children = np.random.SeedSequence(seed).spawn(max(n_init, 1))
    for r, child in enumerate(children):
        if r == 0:
            start = _build(d, n_clusters)
        else:
            start = np.random.default_rng(child).choice(n, size=n_clusters, replace=False).tolist()
        medoids, labels, cost, history = _swap(d, start, max_swaps)
        if best is None or cost < best.cost:
            best = ClusterAssignment(labels, n_clusters, cost, len(history), tuple(history),
                                     medoids=tuple(int(m) for m in medoids))
    return best
