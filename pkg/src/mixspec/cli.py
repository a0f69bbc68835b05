"""Command-line driver.

``mixspec <subcommand> --config run.toml [--out DIR] [--seed S] [--threads T] [--set key=value ...]``

The stage subcommands (ingest, factorize, fit-graph, embed, cluster,
evaluate) read and write artifacts in the output directory, so a run can
be resumed from any stage. ``pipeline`` runs everything and ``benchmark``
runs several dataset configs. Exit status: 0 on success, 1 on a usage or
config error, 2 when a stage fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import clustering, pipeline, spectral
from .config import describe_keys, read_config_file, validate_config
from .dataset import load_matrix, save_matrix
from .errors import ConfigError, MixspecError, StageError
from .factorization import load_factor_model, save_factor_model
from .graph_model import load_theta, save_theta

log = logging.getLogger("mixspec")

STAGES = ("ingest", "factorize", "fit-graph", "embed", "cluster", "evaluate")
SUBCOMMANDS = STAGES + ("pipeline", "benchmark")

# artifact file names inside the work directory
DATA = "data.npz"
FACTORS = "factors.txt"
SIMILARITY = "similarity.npy"
THETA = "theta.csv"
TRACE = "trace.csv"
BASIS = "basis.npz"
EMBEDDING = "embedding.csv"
PCS = "pc_features.csv"
METRICS = "metrics.csv"

HELP = {
    "ingest": "load, encode and scale the CSV; writes data.npz and ingest.json",
    "factorize": "collective NMF of data.npz; writes factors.txt",
    "fit-graph": "similarity tensor and edge-weight fit; writes similarity.npy, theta.csv, trace.csv",
    "embed": "Laplacian eigenbasis and spectral features; writes basis.npz, embedding.csv, pc_features.csv",
    "cluster": "run every configured method and L; writes assign_<method>_L<L>.csv",
    "evaluate": "metrics of the saved assignments; writes metrics.csv",
    "pipeline": "all stages for every seed; writes report.json, tables.csv, fig2.csv, fig3.csv, embedding.csv",
    "benchmark": "run each dataset config listed under 'configs'; one tables.csv per dataset",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser():
    keys = "config keys (set in the TOML file or with --set key=value):\n" + describe_keys()
    parser = _Parser(prog="mixspec", description=__doc__.split("\n\n")[0],
                     epilog=keys, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", metavar="subcommand", parser_class=_Parser)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, help=HELP[name], description=HELP[name], epilog=keys,
                            formatter_class=argparse.RawDescriptionHelpFormatter)
        sp.add_argument("--config", required=True, help="TOML run config")
        sp.add_argument("--out", help="output / work directory (overrides 'out')")
        sp.add_argument("--seed", type=int, help="single replicate seed (overrides 'seeds')")
        sp.add_argument("--threads", type=int, help="maximum concurrent replicates")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        dest="overrides", help="override a config key; repeatable")
        sp.add_argument("-v", "--verbose", action="count", default=0)
        sp.add_argument("-q", "--quiet", action="store_true")
    return parser


def _overrides(args):
    out = list(args.overrides)
    if args.seed is not None:
        out.append(f"seeds=[{args.seed}]")
    if args.threads is not None:
        out.append(f"threads={args.threads}")
    if args.out is not None:
        out.append(f"out={json.dumps(str(Path(args.out).resolve()))}")
    return out


def _workdir(cfg):
    if cfg.out is None:
        raise ConfigError("no output directory: set 'out' in the config or pass --out")
    path = Path(cfg.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _need(stage, path):
    if not path.is_file():
        raise StageError(stage, FileNotFoundError(
            f"missing artifact {path.name} in {path.parent}; run the earlier stages first"))
    return path


def _write(path, writer):
    pipeline.atomic_write(path, writer)


def _load_data(stage, wd):
    return load_matrix(_need(stage, wd / DATA))


def _resolved(cfg, data):
    return pipeline.resolve_for(cfg, data)


# -- stage commands -----------------------------------------------------------

def cmd_ingest(cfg, wd):
    with pipeline.stage("ingest"):
        data, info = pipeline.stage_ingest(cfg)
        pipeline.resolve_for(cfg, data)
    _write(wd / DATA, lambda tmp: save_matrix(tmp, data))
    meta = {"n": info.n_rows, "dropped_rows": info.n_dropped,
            "dropped_levels": list(info.dropped_levels), "p1": info.p1, "p2": info.p2}
    pipeline.write_text(wd / "ingest.json", json.dumps(meta, indent=2) + "\n")
    log.info("ingest: n=%d p1=%d p2=%d, %d incomplete rows dropped",
             info.n_rows, info.p1, info.p2, info.n_dropped)


def cmd_factorize(cfg, wd):
    data = _load_data("factorize", wd)
    with pipeline.stage("factorize"):
        cfg = _resolved(cfg, data)
        model, trace = pipeline.stage_factorize(cfg, data, cfg.seeds[0])
    _write(wd / FACTORS, lambda tmp: save_factor_model(tmp, model))
    log.info("factorize: k=%d objective %.6g -> %.6g", model.k, trace.objective[0], min(trace.objective))


def cmd_fit_graph(cfg, wd):
    from .factorization import dense_maps
    from .graph_model import fit
    from .similarity import SimilarityConfig, similarity_tensor

    data = _load_data("fit-graph", wd)
    model = load_factor_model(_need("fit-graph", wd / FACTORS))
    with pipeline.stage("fit-graph"):
        cfg = _resolved(cfg, data)
        tensor = similarity_tensor(data, dense_maps(model, cfg.beta), SimilarityConfig(cfg.epsilon))
        theta, trace = fit(tensor, replace(cfg.fit, seed=cfg.fit.seed + cfg.seeds[0]))

    def save_tensor(tmp):
        with open(tmp, "wb") as fh:
            np.save(fh, np.asarray(tensor.values))

    _write(wd / SIMILARITY, save_tensor)
    _write(wd / THETA, lambda tmp: save_theta(tmp, theta, data.p))
    _write(wd / TRACE, trace.to_csv)
    log.info("fit-graph: %d iterations, stop=%s, logL %.6g", trace.n_iter, trace.stop_reason,
             trace.log_likelihood[-1])


def cmd_embed(cfg, wd):
    data = _load_data("embed", wd)
    theta, _ = load_theta(_need("embed", wd / THETA))
    with pipeline.stage("embed"):
        cfg = _resolved(cfg, data)
        basis, emb = pipeline.stage_embed(cfg, data, theta)
        pcs = clustering.pca_features(data, cfg.n_features)
    idx = spectral.select_components(basis, cfg.n_features, cfg.eigen_order, cfg.drop_constant)
    _write(wd / BASIS, basis.save)
    _write(wd / EMBEDDING, lambda tmp: spectral.embedding_to_csv(tmp, emb, basis.eigenvalues[idx]))
    _write(wd / PCS, lambda tmp: np.savetxt(tmp, pcs, delimiter=",", fmt="%.17g"))
    log.info("embed: l=%d of p=%d", cfg.n_features, data.p)


def _load_features(stage, wd, cfg, data):
    basis = spectral.SpectralBasis.load(_need(stage, wd / BASIS))
    emb = spectral.transform(data, basis, cfg.n_features, cfg.eigen_order, cfg.drop_constant)
    pcs = np.loadtxt(_need(stage, wd / PCS), delimiter=",", ndmin=2)
    return emb, pcs


def _assign_path(wd, method, L):
    return wd / f"assign_{method}_L{L}.csv"


def cmd_cluster(cfg, wd):
    data = _load_data("cluster", wd)
    with pipeline.stage("cluster"):
        cfg = _resolved(cfg, data)
        emb, pcs = _load_features("cluster", wd, cfg, data)
        assignments = pipeline.stage_cluster(cfg, data, emb, pcs, cfg.seeds[0])
    for (method, L), a in assignments.items():
        _write(_assign_path(wd, method, L), a.to_csv)
    log.info("cluster: %d assignments written", len(assignments))


def cmd_evaluate(cfg, wd):
    data = _load_data("evaluate", wd)
    with pipeline.stage("evaluate"):
        cfg = _resolved(cfg, data)
        emb, pcs = _load_features("evaluate", wd, cfg, data)
        assignments = {}
        for L in cfg.clusters:
            for method in cfg.methods:
                path = _need("evaluate", _assign_path(wd, method, L))
                assignments[(method, L)] = clustering.ClusterAssignment.from_csv(path, L)
        rows = [r.to_row() for r in pipeline.stage_evaluate(cfg, data, emb, pcs, assignments)]
    cols = ["dataset", "method", "L", "l", "R", "E", "J", "alpha"]
    pipeline.write_text(wd / METRICS, pipeline.rows_to_csv(rows, cols))
    for r in rows:
        log.info("%-10s L=%-3d R=%.4f E=%.4f J=%.4f", r["method"], r["L"], r["R"], r["E"], r["J"])


def cmd_pipeline(cfg, wd):
    report = pipeline.run_pipeline(cfg)
    pipeline.write_outputs(report, wd)
    for r in report.table_rows():
        log.info("%-10s L=%-3d R=%.4f±%.4f E=%.4f±%.4f", r["method"], r["L"], r["R"], r["R_std"],
                 r["E"], r["E_std"])
    log.info("outputs written to %s", wd)


def cmd_benchmark(path, overrides):
    """Run every config listed in a benchmark file.

    The file holds ``configs = [...]`` (paths relative to the file),
    an ``out`` directory and optionally ``skip_missing = true``, which
    skips datasets whose data file is absent instead of failing.
    """
    path = Path(path)
    raw = read_config_file(path)
    unknown = set(raw) - {"configs", "out", "skip_missing", "set"}
    errors = [f"unknown benchmark key: {k}" for k in sorted(unknown)]
    configs = raw.get("configs")
    if not isinstance(configs, list) or not configs or not all(isinstance(c, str) for c in configs):
        errors.append("'configs' must be a non-empty list of config paths")
    if errors:
        raise ConfigError(errors)
    shared = [f"{k}={json.dumps(v)}" for k, v in raw.get("set", {}).items()]
    out_over = [o for o in overrides if o.startswith("out=")]
    base_out = None
    if out_over:
        base_out = Path(json.loads(out_over[-1][4:]))
    elif "out" in raw:
        base_out = (path.parent / raw["out"]).resolve()
    if base_out is None:
        raise ConfigError("no output directory: set 'out' in the benchmark file or pass --out")
    overrides = [o for o in overrides if not o.startswith("out=")]
    # validate every dataset config before running any of them
    resolved = []
    for entry in configs:
        cpath = (path.parent / entry).resolve()
        if not cpath.is_file():
            errors.append(f"listed config not found: {cpath}")
            continue
        try:
            resolved.append((cpath, validate_config(cpath, shared + overrides)))
        except ConfigError as exc:
            errors.extend(f"{cpath.name}: {e}" for e in exc.errors)
    if errors:
        raise ConfigError(errors)
    summary = []
    for cpath, cfg in resolved:
        name = cfg.name or cpath.stem
        if not Path(cfg.data).is_file() and raw.get("skip_missing", False):
            log.warning("benchmark: skipping %s, data file %s not found", name, cfg.data)
            summary.append({"dataset": name, "status": "skipped: data file not found"})
            continue
        wd = base_out / name
        cfg = replace(cfg, out=str(wd))
        report = pipeline.run_pipeline(cfg)
        pipeline.write_outputs(report, wd)
        summary.append({"dataset": name, "status": "ok", "tables": str(wd / "tables.csv")})
        log.info("benchmark: %s done", name)
    pipeline.write_text(base_out / "benchmark.json", json.dumps(summary, indent=2) + "\n")


COMMANDS = {"ingest": cmd_ingest, "factorize": cmd_factorize, "fit-graph": cmd_fit_graph,
            "embed": cmd_embed, "cluster": cmd_cluster, "evaluate": cmd_evaluate,
            "pipeline": cmd_pipeline}


def _setup_logging(args):
    level = logging.WARNING if args.quiet else (logging.DEBUG if args.verbose > 1 else logging.INFO)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(message)s"))
    root = logging.getLogger("mixspec")
    root.handlers[:] = [handler]
    root.setLevel(level)
    root.propagate = False


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return 1
    except UsageError as exc:
        print(f"mixspec: error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    _setup_logging(args)
    if not Path(args.config).is_file():
        print(f"mixspec: error: config file not found: {args.config}", file=sys.stderr)
        return 1
    try:
        overrides = _overrides(args)
        if args.command == "benchmark":
            cmd_benchmark(args.config, overrides)
        else:
            cfg = validate_config(args.config, overrides)
            COMMANDS[args.command](cfg, _workdir(cfg))
    except ConfigError as exc:
        print(f"mixspec: invalid configuration ({args.config}):", file=sys.stderr)
        for e in exc.errors:
            print(f"  - {e}", file=sys.stderr)
        return 1
    except StageError as exc:
        print(f"mixspec: {exc}", file=sys.stderr)
        return 2
    except (MixspecError, OSError, ValueError, ArithmeticError) as exc:
        print(f"mixspec: [{args.command}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
