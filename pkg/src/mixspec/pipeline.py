"""End-to-end runs: ingest, factorize, similarity, graph fit, embed, cluster, evaluate.

Each stage is a plain function so that the CLI can run them one at a
time from saved artifacts; :func:`run_pipeline` chains them for every
replicate seed and assembles a :class:`RunReport`.
"""

from __future__ import annotations

import json
import logging
import math
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import clustering, metrics, spectral
from .config import PipelineConfig
from .dataset import IngestInfo, MixedDataMatrix, ingest
from .errors import ConfigError, InvalidFeatureCount, MixspecError, StageError, TooManyClusters
from .factorization import FactorModel, dense_maps, factorize, objective
from .graph_model import FitTrace, fit
from .similarity import SimilarityConfig, similarity_tensor

log = logging.getLogger(__name__)


@contextmanager
def stage(name, timings=None):
    """Tag any failure inside the block with the stage name."""
    t0 = time.perf_counter()
    try:
        yield
    except (StageError, ConfigError):
        raise
    except (MixspecError, ValueError, ArithmeticError, OSError) as exc:
        raise StageError(name, exc) from exc
    finally:
        if timings is not None:
            timings[name] = timings.get(name, 0.0) + time.perf_counter() - t0


# -- stages -------------------------------------------------------------------

def stage_ingest(cfg: PipelineConfig):
    data, info = ingest(cfg.data, cfg.schema, beta=cfg.beta, header=cfg.header,
                        row_cap=cfg.row_cap, seed=cfg.subsample_seed,
                        drop_unobserved=cfg.drop_unobserved)
    if data.labels is None:
        raise ConfigError("schema must flag a label column for evaluation")
    return data, info


def resolve_for(cfg: PipelineConfig, data: MixedDataMatrix) -> PipelineConfig:
    """Re-check width-dependent settings against the encoded data."""
    p = data.p
    usable = p - 1 if cfg.drop_constant else p
    errors = []
    l = cfg.n_features if cfg.n_features is not None else math.ceil(p / 2)
    if l > usable:
        errors.append(f"n_features={l} exceeds the {usable} usable eigenvectors (p={p})")
    k = cfg.factorize.k if cfg.factorize.k is not None else math.ceil(p / 2)
    if k >= p:
        errors.append(f"factorize.k={k} must be < p1 + p2 = {p}")
    grid = cfg.l_grid if cfg.l_grid is not None else tuple(range(2, p + 1))
    grid = tuple(x for x in grid if x <= usable)
    if errors:
        raise ConfigError(errors)
    return replace(cfg, n_features=l, l_grid=grid, factorize=replace(cfg.factorize, k=k))


def stage_factorize(cfg: PipelineConfig, data: MixedDataMatrix, seed: int = 0):
    fz = replace(cfg.factorize, seed=cfg.factorize.seed + seed)
    model, trace = factorize(data, fz, return_trace=True)
    return model, trace


def stage_fit_graph(cfg: PipelineConfig, data: MixedDataMatrix, model: FactorModel,
                    seed: int = 0):
    maps = dense_maps(model, cfg.beta)
    tensor = similarity_tensor(data, maps, SimilarityConfig(cfg.epsilon))
    theta, trace = fit(tensor, replace(cfg.fit, seed=cfg.fit.seed + seed))
    return theta, trace


def stage_embed(cfg: PipelineConfig, data: MixedDataMatrix, theta):
    basis = spectral.eigendecompose(spectral.laplacian(spectral.symmetrize_abs(theta, data.p)))
    emb = spectral.transform(data, basis, cfg.n_features, cfg.eigen_order, cfg.drop_constant)
    return basis, emb


def se_features(cfg, data, basis, l):
    return spectral.transform(data, basis, l, cfg.eigen_order, cfg.drop_constant)


def stage_cluster(cfg: PipelineConfig, data: MixedDataMatrix, embedding, pcs, seed: int = 0):
    """Assignments keyed by ``(method, L)``."""
    cseed = cfg.cluster_seed + seed
    out = {}
    diss = None
    for L in cfg.clusters:
        if L > data.n:
            raise TooManyClusters(f"{L} clusters requested for {data.n} rows")
        for method in cfg.methods:
            if method == "SE-KMeans":
                a = clustering.kmeans(embedding, L, seed=cseed, n_init=cfg.restarts)
            elif method == "PC-KMeans":
                a = clustering.kmeans(pcs, L, seed=cseed, n_init=cfg.restarts)
            elif method == "KProto":
                a = clustering.kprototype(data, L, gamma=cfg.gamma, seed=cseed,
                                          n_init=cfg.restarts)
            else:
                if diss is None:
                    diss = clustering.gower_dissimilarity(data)
                a = clustering.kmedoid(diss, L, seed=cseed, n_init=cfg.restarts)
            out[(method, L)] = a
    return out


def _space_for(method, embedding, pcs, data):
    if method == "SE-KMeans":
        return embedding
    if method == "PC-KMeans":
        return pcs
    return data.values


def stage_evaluate(cfg: PipelineConfig, data: MixedDataMatrix, embedding, pcs, assignments):
    rows = []
    for (method, L), a in assignments.items():
        space = _space_for(method, embedding, pcs, data)
        rep = metrics.evaluate(space, a.labels, data.labels,
                               context={"dataset": cfg.name, "method": method, "L": L,
                                        "l": cfg.n_features if method in ("SE-KMeans", "PC-KMeans")
                                        else data.p})
        rows.append(rep)
    return rows


def eigen_diffusion_pairs(cfg, data, basis, l_grid):
    out = []
    for l in l_grid:
        if not 1 <= l <= data.p:
            raise InvalidFeatureCount(f"feature count {l} outside [1, {data.p}]")
        a_se = metrics.eigen_diffusion(metrics.covariance_eigenvalues(se_features(cfg, data, basis, l)))
        a_pc = metrics.eigen_diffusion(metrics.covariance_eigenvalues(clustering.pca_features(data, l)))
        out.append({"l": int(l), "alpha_se": a_se, "alpha_pc": a_pc})
    return out


def separability_pairs(cfg, data, embedding, pcs, cluster_grid, seed=0):
    out = []
    cseed = cfg.cluster_seed + seed
    for L in cluster_grid:
        if L > data.n:
            raise TooManyClusters(f"{L} clusters requested for {data.n} rows")
        a_se = clustering.kmeans(embedding, L, seed=cseed, n_init=cfg.restarts)
        a_pc = clustering.kmeans(pcs, L, seed=cseed, n_init=cfg.restarts)
        out.append({"L": int(L),
                    "j_se": metrics.cluster_separability(embedding, a_se),
                    "j_pc": metrics.cluster_separability(pcs, a_pc)})
    return out


# -- replicate and report -----------------------------------------------------

@dataclass
class Replicate:
    seed: int
    metrics: list
    fig2: list
    fig3: list
    eigenvalues: np.ndarray
    theta: np.ndarray
    fit_trace: FitTrace
    factorize_objective: tuple[float, float]
    embedding: np.ndarray
    timings: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "seed": self.seed,
            "factorize": {"initial_objective": self.factorize_objective[0],
                          "final_objective": self.factorize_objective[1]},
            "fit": self.fit_trace.summary(),
            "theta": [float(x) for x in self.theta],
            "laplacian_eigenvalues": [float(x) for x in self.eigenvalues],
            "metrics": [m.to_row() for m in self.metrics],
            "fig2": self.fig2,
            "fig3": self.fig3,
        }


def run_replicate(cfg: PipelineConfig, data: MixedDataMatrix, seed: int,
                  sweeps: bool = True) -> Replicate:
    timings = {}
    with stage("factorize", timings):
        model, ftrace = stage_factorize(cfg, data, seed)
    with stage("fit-graph", timings):
        theta, trace = stage_fit_graph(cfg, data, model, seed)
    with stage("embed", timings):
        basis, emb = stage_embed(cfg, data, theta)
        pcs = clustering.pca_features(data, cfg.n_features)
    with stage("cluster", timings):
        assignments = stage_cluster(cfg, data, emb, pcs, seed)
    with stage("evaluate", timings):
        rows = stage_evaluate(cfg, data, emb, pcs, assignments)
    fig2 = fig3 = []
    if sweeps:
        with stage("sweeps", timings):
            fig2 = eigen_diffusion_pairs(cfg, data, basis, cfg.l_grid)
            fig3 = separability_pairs(cfg, data, emb, pcs, cfg.cluster_grid, seed)
    return Replicate(seed, rows, fig2, fig3, np.asarray(basis.eigenvalues), np.asarray(theta),
                     trace, (ftrace.objective[0], objective(model, data, cfg.factorize.shift_numerical)), emb, timings)


def _mean_std(values):
    arr = np.asarray(values, dtype=float)
    return float(arr.mean()), float(arr.std(ddof=0))


@dataclass
class RunReport:
    config: PipelineConfig
    ingest: IngestInfo
    p1: int
    p2: int
    replicates: list
    timings: dict = field(default_factory=dict)

    def table_rows(self):
        """One row per (method, L): mean and std of R, E, J, alpha over replicates."""
        cells = {}
        for rep in self.replicates:
            for m in rep.metrics:
                key = (m.context["method"], m.context["L"])
                cells.setdefault(key, []).append(m)
        rows = []
        for method in self.config.methods:
            for L in self.config.clusters:
                ms = cells.get((method, L), [])
                if not ms:
                    continue
                row = {"dataset": self.config.name, "method": method, "L": L,
                       "n_seeds": len(ms)}
                for key, attr in (("R", "rand_index"), ("E", "entropy"),
                                  ("J", "separability_j"), ("alpha", "alpha")):
                    row[key], row[key + "_std"] = _mean_std([getattr(m, attr) for m in ms])
                rows.append(row)
        return rows

    def fig2_rows(self):
        return _average_curves([r.fig2 for r in self.replicates], "l", ("alpha_se", "alpha_pc"))

    def fig3_rows(self):
        return _average_curves([r.fig3 for r in self.replicates], "L", ("j_se", "j_pc"))

    def to_dict(self, include_timings=True):
        d = {
            "config": self.config.to_dict(),
            "dataset": {"name": self.config.name, "n": self.ingest.n_rows,
                        "dropped_rows": self.ingest.n_dropped,
                        "dropped_levels": list(self.ingest.dropped_levels),
                        "p1": self.p1, "p2": self.p2},
            "replicates": [r.to_dict() for r in self.replicates],
            "tables": self.table_rows(),
            "fig2": self.fig2_rows(),
            "fig3": self.fig3_rows(),
        }
        if include_timings:
            d["timings"] = {"total": self.timings,
                            "replicates": [r.timings for r in self.replicates]}
        return d


def _average_curves(curves, key, fields):
    if not curves or not curves[0]:
        return []
    rows = []
    for i, point in enumerate(curves[0]):
        row = {key: point[key]}
        for f in fields:
            vals = [c[i][f] for c in curves]
            row[f], row[f + "_std"] = _mean_std(vals)
        rows.append(row)
    return rows


def run_pipeline(cfg: PipelineConfig, sweeps: bool = True) -> RunReport:
    """Every stage for every replicate seed; replicates may run on ``cfg.threads`` threads."""
    timings = {}
    t0 = time.perf_counter()
    with stage("ingest", timings):
        data, info = stage_ingest(cfg)
        cfg = resolve_for(cfg, data)
    log.info("%s: n=%d p1=%d p2=%d (dropped %d rows)", cfg.name, data.n, data.p1, data.p2,
             info.n_dropped)
    if cfg.threads > 1 and len(cfg.seeds) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            reps = list(pool.map(lambda s: run_replicate(cfg, data, s, sweeps), cfg.seeds))
    else:
        reps = [run_replicate(cfg, data, s, sweeps) for s in cfg.seeds]
    timings["total"] = time.perf_counter() - t0
    report = RunReport(cfg, info, data.p1, data.p2, reps, timings)
    report.data = data
    return report


def eigen_diffusion_sweep(cfg: PipelineConfig, l_grid):
    """(l, alpha_se, alpha_pc) rows for the first replicate seed."""
    data, _ = stage_ingest(cfg)
    cfg = resolve_for(cfg, data)
    if max(l_grid) > data.p:
        raise InvalidFeatureCount(f"l_grid maximum {max(l_grid)} exceeds p={data.p}")
    seed = cfg.seeds[0]
    model, _ = stage_factorize(cfg, data, seed)
    theta, _ = stage_fit_graph(cfg, data, model, seed)
    basis, _ = stage_embed(cfg, data, theta)
    return eigen_diffusion_pairs(cfg, data, basis, l_grid)


def separability_sweep(cfg: PipelineConfig, cluster_grid):
    """(L, j_se, j_pc) rows for the first replicate seed."""
    data, _ = stage_ingest(cfg)
    cfg = resolve_for(cfg, data)
    if max(cluster_grid) > data.n:
        raise TooManyClusters(f"cluster grid maximum {max(cluster_grid)} exceeds n={data.n}")
    seed = cfg.seeds[0]
    model, _ = stage_factorize(cfg, data, seed)
    theta, _ = stage_fit_graph(cfg, data, model, seed)
    _, emb = stage_embed(cfg, data, theta)
    pcs = clustering.pca_features(data, cfg.n_features)
    return separability_pairs(cfg, data, emb, pcs, cluster_grid, seed)


# -- output files -------------------------------------------------------------

def atomic_write(path, writer, mode="w"):
    """Write through a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_text(path, text):
    def w(tmp):
        with open(tmp, "w") as fh:
            fh.write(text)
    atomic_write(path, w)


def rows_to_csv(rows, columns):
    lines = [",".join(columns)]
    for r in rows:
        lines.append(",".join(_fmt(r.get(c)) for c in columns))
    return "\n".join(lines) + "\n"


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


TABLE_COLUMNS = ["dataset", "method", "L", "R", "R_std", "E", "E_std", "J", "J_std",
                 "alpha", "alpha_std", "n_seeds"]


def report_json(report: RunReport, include_timings=True):
    return json.dumps(report.to_dict(include_timings), indent=2, sort_keys=True) + "\n"


def write_outputs(report: RunReport, out_dir):
    out = Path(out_dir)
    write_text(out / "report.json", report_json(report))
    write_text(out / "tables.csv", rows_to_csv(report.table_rows(), TABLE_COLUMNS))
    write_text(out / "fig2.csv", rows_to_csv(report.fig2_rows(),
                                             ["l", "alpha_se", "alpha_pc", "alpha_se_std", "alpha_pc_std"]))
    write_text(out / "fig3.csv", rows_to_csv(report.fig3_rows(),
                                             ["L", "j_se", "j_pc", "j_se_std", "j_pc_std"]))
    first = report.replicates[0]
    idx = spectral.select_components(
        spectral.SpectralBasis(first.eigenvalues, np.eye(len(first.eigenvalues))),
        report.config.n_features, report.config.eigen_order, report.config.drop_constant)
    atomic_write(out / "embedding.csv",
                 lambda tmp: spectral.embedding_to_csv(tmp, first.embedding, first.eigenvalues[idx]))
    return out
