"""Acceptance criteria, one test per criterion.

Every test prints (and records for the end-of-run summary) a single
``criterion N [PASS|FAIL]`` line with the measured quantities and the
runtime against its budget.
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest

from mixspec.clustering import kmedoid
from mixspec.config import validate_config
from mixspec.factorization import FactorizeConfig, factorize_arrays, objective_arrays
from mixspec.graph_model import FitConfig, fit, gradient, pseudo_log_likelihood
from mixspec.metrics import cluster_entropy, cluster_separability, eigen_diffusion, rand_index
from mixspec.pipeline import report_json, run_pipeline
from mixspec.similarity import SimilarityConfig, g, pair_similarity, similarity_tensor
from mixspec.spectral import eigendecompose, laplacian
from mixspec.factorization import dense_maps, factorize

from conftest import CONFIGS, random_mixed
from oracles import components, entropy_loops, pam_exhaustive, rand_index_pairs

SEEDS = (0, 1, 2, 3, 4)


def record(log, number, title, ok, detail, elapsed, budget):
    within = elapsed < budget
    status = "PASS" if ok and within else "FAIL"
    line = f"criterion {number:2d} [{status}] {title}: {detail} ({elapsed:.1f} s, budget {budget:g} s)"
    print(line)
    log[number] = line
    assert ok, line
    assert within, line


class _Clock:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


_RUNS = {}


def _run(name):
    """SE/PC pipeline over the five replicate seeds, cached per dataset with its wall time."""
    if name not in _RUNS:
        cfg = validate_config(CONFIGS / f"{name}.toml")
        cfg = replace(cfg, seeds=SEEDS, methods=("SE-KMeans", "PC-KMeans"))
        t0 = time.perf_counter()
        report = run_pipeline(cfg)
        _RUNS[name] = (report, time.perf_counter() - t0)
    return _RUNS[name]


def _cell(report, method, L):
    return next(r for r in report.table_rows() if r["method"] == method and r["L"] == L)


# -- property suites ----------------------------------------------------------

def test_criterion_01_gradient_matches_finite_differences(acceptance_log):
    rng = np.random.default_rng(101)
    worst = 0.0
    with _Clock() as clk:
        for _ in range(100):
            n, p = int(rng.integers(2, 21)), int(rng.integers(2, 9))
            m = p * (p - 1) // 2
            H = rng.uniform(-1, 1, (n, m))
            theta = rng.normal(0, 1, m)
            h = 1e-6
            fd = np.empty(m)
            for e in range(m):
                step = np.zeros(m)
                step[e] = h
                fd[e] = (pseudo_log_likelihood(theta + step, H) - pseudo_log_likelihood(theta - step, H)) / (2 * h)
            rel = np.linalg.norm(gradient(theta, H) - fd) / max(np.linalg.norm(fd), 1e-300)
            worst = max(worst, rel)
    record(acceptance_log, 1, "gradient vs central differences", worst < 1e-5,
           f"max relative error {worst:.2e} over 100 instances", clk.elapsed, 10)


def test_criterion_02_origin_is_stationary(acceptance_log):
    rng = np.random.default_rng(102)
    worst_origin = worst_single = 0.0
    with _Clock() as clk:
        for _ in range(100):
            n, m = int(rng.integers(2, 60)), int(rng.integers(1, 40))
            H = rng.uniform(-1, 1, (n, m))
            worst_origin = max(worst_origin, float(np.abs(gradient(np.zeros(m), H)).max()))
            worst_single = max(worst_single, float(np.abs(gradient(rng.normal(0, 5, m), H[:1])).max()))
    ok = worst_origin <= 1e-12 and worst_single == 0.0
    record(acceptance_log, 2, "stationary origin", ok,
           f"max |grad(0)| {worst_origin:.1e}, max |grad| at n=1 {worst_single:.1e}", clk.elapsed, 1)


def test_criterion_03_laplacian_suite(acceptance_log):
    rng = np.random.default_rng(103)
    failures = []
    with _Clock() as clk:
        for trial in range(200):
            p = int(rng.integers(2, 11))
            w = rng.uniform(0.05, 2.0, (p, p)) * (rng.random((p, p)) < rng.uniform(0.05, 0.9))
            w = np.triu(w, 1)
            w = w + w.T
            delta = laplacian(w)
            basis = eigendecompose(delta)
            phi = basis.eigenvectors
            checks = {
                "symmetry": np.array_equal(delta, delta.T),
                "row sums": np.abs(delta.sum(axis=1)).max() <= 1e-10,
                "min eigenvalue": basis.eigenvalues.min() >= -1e-8,
                "orthonormal": np.linalg.norm(phi.T @ phi - np.eye(p)) <= 1e-8,
                "components": int(np.sum(basis.eigenvalues < 1e-9)) == components(w),
            }
            failures += [(trial, k) for k, v in checks.items() if not v]
    record(acceptance_log, 3, "Laplacian suite", not failures,
           f"200 random graphs, {len(failures)} failed checks {failures[:3]}", clk.elapsed, 10)


def test_criterion_04_similarity_suite(acceptance_log):
    rng = np.random.default_rng(104)
    eps = 0.05
    with _Clock() as clk:
        u, z = rng.uniform(-1, 1, 100_000), rng.uniform(-1, 1, 100_000)
        v = g(u, z, eps)
        bounded = bool(np.all((v >= -1) & (v <= 1)))
        symmetric = bool(np.array_equal(v, g(z, u, eps)))
        lo, hi = np.minimum(abs(u), abs(z)), np.maximum(abs(u), abs(z))
        main = lo > eps
        branch_main = np.allclose(v[main], (lo / hi * np.sign(u * z))[main], rtol=0, atol=0)
        mid = (lo <= eps) & (hi > eps)
        branch_mid = np.array_equal(v[mid], (eps / hi)[mid])
        branch_low = np.all(v[hi <= eps] == 1.0)
        # exact boundaries: min == eps is the middle branch, max == eps the last
        edges = (g(eps, 0.5, eps) == eps / 0.5 and g(eps, -0.5, eps) == eps / 0.5
                 and g(eps, eps, eps) == 1.0 and g(-eps, eps / 2, eps) == 1.0)
        c = rng.uniform(0.1, 10, 100_000)
        keep = main & (c * lo > eps) & (c * hi <= 1e6)
        scale = np.allclose(g(c * u, c * z, eps)[keep], v[keep], rtol=1e-12, atol=0)
        # the full h on mixed data: bounded, and symmetric in the variable pair
        data = random_mixed(n=200, p1=4, levels=(3, 2, 4), seed=4)
        maps = dense_maps(factorize(data, FactorizeConfig(epochs=5)), data.beta)
        H = similarity_tensor(data, maps, SimilarityConfig(eps)).values
        h_bounded = bool(H.min() >= -1 and H.max() <= 1)
        pairs = [(int(i), int(s), int(t)) for i, s, t in zip(rng.integers(0, 200, 2000),
                                                           rng.integers(0, data.p, 2000),
                                                           rng.integers(0, data.p, 2000)) if s != t]
        h_sym = all(pair_similarity(i, s, t, data, maps) == pair_similarity(i, t, s, data, maps)
                    for i, s, t in pairs)
    checks = dict(bounded=bounded, symmetric=symmetric, main=branch_main, middle=branch_mid,
                  low=bool(branch_low), boundaries=edges, scale=scale, h_bounded=h_bounded, h_symmetric=h_sym)
    record(acceptance_log, 4, "similarity suite", all(checks.values()),
           f"1e5 fuzzed pairs + {H.size} tensor entries; failed: {[k for k, ok in checks.items() if not ok]}",
           clk.elapsed, 5)


def test_criterion_05_metric_oracles(acceptance_log):
    rng = np.random.default_rng(105)
    mismatches = 0
    with _Clock() as clk:
        for _ in range(500):
            n = int(rng.integers(2, 51))
            t, c = rng.integers(0, int(rng.integers(1, 5)), n), rng.integers(0, int(rng.integers(1, 7)), n)
            if rand_index(t, c) != rand_index_pairs(t, c):
                mismatches += 1
            if cluster_entropy(t, c) != pytest.approx(entropy_loops(t, c), abs=1e-12):
                mismatches += 1
        hand = [
            abs(eigen_diffusion([1, 1]) - 1.0),
            abs(eigen_diffusion([3, 1]) - 0.8),
            abs(eigen_diffusion([5]) - 1.0),
            abs(cluster_separability(np.array([[0.0, 0.0], [0.0, 2.0], [4.0, 0.0], [4.0, 2.0]]), [0, 0, 1, 1]) - 0.8),
            abs(cluster_separability(np.array([[0.0], [1.0], [3.0]]), [0, 0, 0])),
            abs(cluster_separability(np.array([[0.0], [1.0], [3.0]]), [0, 1, 2]) - 1.0),
        ]
    ok = mismatches == 0 and max(hand) <= 1e-12
    record(acceptance_log, 5, "metric oracles", ok,
           f"{mismatches} mismatches over 500 label pairs, max hand-case error {max(hand):.1e}", clk.elapsed, 5)


def test_criterion_06_pam_optimality(acceptance_log):
    rng = np.random.default_rng(106)
    bad = 0
    with _Clock() as clk:
        for _ in range(100):
            n = int(rng.integers(2, 9))
            L = int(rng.integers(1, min(3, n) + 1))
            pts = rng.random((n, 3))
            d = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
            if abs(kmedoid(d, L).cost - pam_exhaustive(d, L)) > 1e-12:
                bad += 1
    record(acceptance_log, 6, "PAM optimality", bad == 0,
           f"{100 - bad}/100 instances equal exhaustive search", clk.elapsed, 30)


def test_criterion_07_factorization_and_monotone_fit(acceptance_log):
    rng = np.random.default_rng(107)
    worst, min_entry, steps = 0.0, math.inf, 0
    with _Clock() as clk:
        for inst in range(10):
            n, p = int(rng.integers(10, 51)), int(rng.integers(3, 11))
            p1 = int(rng.integers(1, p))
            k = int(rng.integers(1, min(4, p)))
            W = rng.uniform(0, 1, (n, k))
            num, cat = W @ (rng.uniform(0, 1, (k, p1)) / k), W @ (rng.uniform(0, 1, (k, p - p1)) / k)

            def watch(Wc, H1c, H2c):
                nonlocal min_entry, steps
                steps += 1
                min_entry = min(min_entry, Wc.min(), H1c.min(), H2c.min())

            model = factorize_arrays(num, cat, FactorizeConfig(k=k, learning_rate=0.05, epochs=2000, seed=inst),
                                     step_callback=watch if inst < 2 else None)
            worst = max(worst, objective_arrays(model.W, model.H1, model.H2, num, cat))
        monotone = True
        for trial in range(10):
            H = rng.uniform(-1, 1, (int(rng.integers(5, 40)), int(rng.integers(1, 30))))
            _, trace = fit(H, FitConfig(learning_rate=1.0, max_iter=300, init_scale=1.0, seed=trial))
            monotone &= bool(np.all(np.diff(trace.log_likelihood) >= 0))
    ok = worst < 1e-2 and min_entry >= 0 and monotone
    record(acceptance_log, 7, "factorization + monotone fit", ok,
           f"max final objective {worst:.2e}, min factor entry over {steps} steps {min_entry:.1e}, "
           f"fit traces monotone={monotone}", clk.elapsed, 60)


def test_criterion_08_determinism(acceptance_log):
    cfg = validate_config(CONFIGS / "heart.toml")
    with _Clock() as clk:
        a = report_json(run_pipeline(cfg), include_timings=False)
        b = report_json(run_pipeline(cfg), include_timings=False)
    record(acceptance_log, 8, "Heart pipeline determinism", a == b,
           f"report.json without timings identical={a == b} ({len(a)} bytes)", clk.elapsed, 120)


# -- qualitative reproduction -------------------------------------------------

def _share(report, key, better):
    hits = total = 0
    for rep in report.replicates:
        for row in getattr(rep, key):
            hits += better(row)
            total += 1
    return hits, total


def test_criterion_09_eigen_diffusion_reduced(acceptance_log):
    parts, ok, elapsed = [], True, 0.0
    for name in ("heart", "tae"):
        report, t = _run(name)
        elapsed = max(elapsed, t)
        hits, total = _share(report, "fig2", lambda r: r["alpha_se"] < r["alpha_pc"])
        ok &= hits >= 0.8 * total
        parts.append(f"{name} {hits}/{total} ({hits / total:.0%})")
    record(acceptance_log, 9, "alpha(SE) < alpha(PC) on >= 80% of l-grid", ok, ", ".join(parts), elapsed, 300)


def test_criterion_10_separability_increased(acceptance_log):
    parts, ok, elapsed = [], True, 0.0
    for name in ("heart", "tae"):
        report, t = _run(name)
        elapsed = max(elapsed, t)
        assert report.config.cluster_grid == tuple(range(2, 11))
        hits, total = _share(report, "fig3", lambda r: r["j_se"] > r["j_pc"])
        ok &= hits >= 0.8 * total
        parts.append(f"{name} {hits}/{total} ({hits / total:.0%})")
    record(acceptance_log, 10, "J(SE) > J(PC) on >= 80% of L in 2..10", ok, ", ".join(parts), elapsed, 300)


# -- soft quantitative targets ------------------------------------------------

def test_criterion_11_heart_table(acceptance_log):
    report, t = _run("heart")
    cell = _cell(report, "SE-KMeans", 2)
    ok = abs(cell["R"] - 0.701) <= 0.07 and abs(cell["E"] - 0.935) <= 0.3
    record(acceptance_log, 11, "Heart SE-KMeans L=2", ok,
           f"R {cell['R']:.3f}±{cell['R_std']:.3f} (target 0.701±0.07), "
           f"E {cell['E']:.3f}±{cell['E_std']:.3f} (target 0.935±0.3), mean over {len(SEEDS)} seeds", t, 120)


def test_criterion_12_tae_table(acceptance_log):
    report, t = _run("tae")
    cell = _cell(report, "SE-KMeans", 10)
    ok = abs(cell["R"] - 0.631) <= 0.07
    record(acceptance_log, 12, "TAE SE-KMeans L=10", ok,
           f"R {cell['R']:.3f}±{cell['R_std']:.3f} (target 0.631±0.07), mean over {len(SEEDS)} seeds", t, 120)


def test_criterion_13_adult_table(acceptance_log):
    cfg = validate_config(CONFIGS / "adult.toml")
    cfg = replace(cfg, seeds=SEEDS, methods=("SE-KMeans",), clusters=(5,))
    with _Clock() as clk:
        report = run_pipeline(cfg, sweeps=False)
    cell = _cell(report, "SE-KMeans", 5)
    ok = abs(cell["R"] - 0.441) <= 0.07 and abs(cell["E"] - 2.773) <= 0.5
    record(acceptance_log, 13, "Adult (5000 rows) SE-KMeans L=5", ok,
           f"R {cell['R']:.3f}±{cell['R_std']:.3f} (target 0.441±0.07), "
           f"E {cell['E']:.3f}±{cell['E_std']:.3f} (target 2.773±0.5), n={report.ingest.n_rows}, "
           f"mean over {len(SEEDS)} seeds", clk.elapsed, 600)


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-s"]))
