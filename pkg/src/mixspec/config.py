"""TOML run configuration: documented keys, defaults, overrides and validation.

A minimal config only names the data and schema files::

    name = "heart"
    data = "../data/heart/heart.csv"
    schema = "../data/heart/schema.toml"

Relative paths are resolved against the config file's directory. Every
other key is optional; see :data:`CONFIG_KEYS` (also printed by
``mixspec <subcommand> --help``).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from ._toml import loads_toml, tomllib
from .dataset import feature_width, load_schema
from .errors import ConfigError, ConfigParseError
from .factorization import FactorizeConfig
from .graph_model import FitConfig

METHODS = ("SE-KMeans", "PC-KMeans", "KProto", "KMed")

# (key, default, description); ``None`` defaults are resolved from the schema.
CONFIG_KEYS = [
    ("name", "", "dataset label used in reports and output paths"),
    ("data", "<required>", "CSV data file"),
    ("schema", "<required>", "TOML schema file ([[column]] tables)"),
    ("header", True, "whether the CSV starts with a header row"),
    ("beta", 1.0, "numerical columns and dense maps are scaled onto [-beta, beta]"),
    ("epsilon", 0.05, "truncation threshold of the ratio similarity g, 0 < epsilon < beta"),
    ("row_cap", None, "subsample at most this many complete rows (None keeps all)"),
    ("subsample_seed", 0, "seed of the row subsample"),
    ("drop_unobserved", False, "omit indicator columns of category levels absent from the data"),
    ("n_features", None, "embedding dimension l; default ceil(p / 2)"),
    ("eigen_order", "ascending", "take eigenvectors by ascending or descending eigenvalue"),
    ("drop_constant", False, "skip the lowest-frequency eigenvector"),
    ("clusters", [2, 5, 10], "cluster counts L for the results table"),
    ("methods", list(METHODS), "subset of SE-KMeans, PC-KMeans, KProto, KMed"),
    ("restarts", 10, "restarts per clustering run; best objective kept"),
    ("cluster_seed", 0, "base seed of the clustering algorithms"),
    ("seeds", [0], "replicate seeds, added to every base stage seed"),
    ("l_grid", None, "feature counts for the eigen-diffusion sweep; default 2..p"),
    ("cluster_grid", list(range(2, 11)), "cluster counts for the separability sweep"),
    ("gamma", None, "k-prototypes categorical weight; default Huang's rule"),
    ("threads", 1, "maximum concurrent replicates"),
    ("out", None, "output directory"),
    ("factorize.k", None, "latent dimension k < p1 + p2; default ceil((p1 + p2) / 2)"),
    ("factorize.learning_rate", 0.05, "SGD step size"),
    ("factorize.epochs", 200, "SGD passes over the rows"),
    ("factorize.seed", 0, "base seed of the factorization"),
    ("factorize.init_scale", 0.1, "factors start uniform on (0, init_scale]"),
    ("factorize.shift_numerical", True, "shift the numerical block by +beta before factorizing"),
    ("fit.learning_rate", 1e-3, "gradient ascent step size eta"),
    ("fit.max_iter", 2000, "maximum ascent iterations"),
    ("fit.tol", 1e-5, "stop when the gradient inf-norm drops below this"),
    ("fit.init_scale", 0.01, "std of the Gaussian start sigma0"),
    ("fit.seed", 0, "base seed of the edge-weight start"),
    ("fit.l2", 0.0, "L2 penalty coefficient"),
    ("fit.backtracking", True, "halve eta whenever a step lowers the objective"),
    ("fit.max_halvings", 20, "maximum halvings per iteration"),
]
_KNOWN = {k for k, _, _ in CONFIG_KEYS}


def describe_keys():
    width = max(len(k) for k, _, _ in CONFIG_KEYS)
    return "\n".join(f"  {k:<{width}}  (default: {d!r})  {text}" for k, d, text in CONFIG_KEYS)


@dataclass(frozen=True)
class PipelineConfig:
    data: str
    schema: str
    name: str = ""
    header: bool = True
    beta: float = 1.0
    epsilon: float = 0.05
    row_cap: int | None = None
    subsample_seed: int = 0
    drop_unobserved: bool = False
    n_features: int | None = None
    eigen_order: str = "ascending"
    drop_constant: bool = False
    clusters: tuple[int, ...] = (2, 5, 10)
    methods: tuple[str, ...] = METHODS
    restarts: int = 10
    cluster_seed: int = 0
    seeds: tuple[int, ...] = (0,)
    l_grid: tuple[int, ...] | None = None
    cluster_grid: tuple[int, ...] = tuple(range(2, 11))
    gamma: float | None = None
    threads: int = 1
    out: str | None = None
    factorize: FactorizeConfig = field(default_factory=FactorizeConfig)
    fit: FitConfig = field(default_factory=FitConfig)

    def to_dict(self):
        return asdict(self)

    def with_p(self, p):
        """Fill the defaults that depend on the encoded width ``p``."""
        fz = self.factorize
        if fz.k is None:
            fz = replace(fz, k=math.ceil(p / 2))
        return replace(
            self,
            factorize=fz,
            n_features=self.n_features if self.n_features is not None else math.ceil(p / 2),
            l_grid=self.l_grid if self.l_grid is not None else tuple(range(2, p + 1)),
        )


def parse_override(text):
    """``key=value`` with the value read as a TOML literal (bare words become strings)."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = (s.strip() for s in text.split("=", 1))
    try:
        value = loads_toml(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key, value


def _flatten(doc, prefix=""):
    flat = {}
    for k, v in doc.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            flat.update(_flatten(v, key + "."))
        else:
            flat[key] = v
    return flat


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return (isinstance(v, (int, float))) and not isinstance(v, bool)


def _int_list(v):
    return isinstance(v, (list, tuple)) and all(_is_int(x) for x in v)


def build_config(flat: dict, base_dir=None) -> PipelineConfig:
    """Validate a flat ``{dotted.key: value}`` mapping; raise ConfigError listing every problem."""
    errors = []
    unknown = sorted(set(flat) - _KNOWN)
    for k in unknown:
        errors.append(f"unknown config key {k!r}")
    for req in ("data", "schema"):
        if req not in flat:
            errors.append(f"missing required key {req!r}")
    base = Path(base_dir) if base_dir is not None else None

    def path(k):
        v = flat.get(k)
        if v is None:
            return None
        if not isinstance(v, str):
            errors.append(f"{k} must be a path string")
            return None
        pth = Path(v)
        if base is not None and not pth.is_absolute():
            pth = (base / pth).resolve()
        return str(pth)

    def get(k, default, check, what):
        v = flat.get(k, default)
        if v is not None and not check(v):
            errors.append(f"{k} must be {what}, got {v!r}")
        return v

    data, schema, out = path("data"), path("schema"), path("out")
    beta = get("beta", 1.0, lambda v: _is_num(v) and v > 0, "a positive number")
    eps = get("epsilon", 0.05, lambda v: _is_num(v) and v > 0, "a positive number")
    if _is_num(beta) and _is_num(eps) and beta > 0 and eps > 0 and not eps < beta:
        errors.append(f"epsilon must be smaller than beta (epsilon={eps}, beta={beta})")
    kw = dict(
        name=get("name", "", lambda v: isinstance(v, str), "a string"),
        header=get("header", True, lambda v: isinstance(v, bool), "a boolean"),
        row_cap=get("row_cap", None, lambda v: _is_int(v) and v >= 2, "an integer >= 2"),
        subsample_seed=get("subsample_seed", 0, _is_int, "an integer"),
        drop_unobserved=get("drop_unobserved", False, lambda v: isinstance(v, bool), "a boolean"),
        n_features=get("n_features", None, lambda v: _is_int(v) and v >= 1, "an integer >= 1"),
        eigen_order=get("eigen_order", "ascending", lambda v: v in ("ascending", "descending"),
                        "'ascending' or 'descending'"),
        drop_constant=get("drop_constant", False, lambda v: isinstance(v, bool), "a boolean"),
        clusters=get("clusters", [2, 5, 10], lambda v: _int_list(v) and v and min(v) >= 1,
                     "a non-empty list of integers >= 1"),
        methods=get("methods", list(METHODS), lambda v: isinstance(v, (list, tuple)) and v
                    and all(m in METHODS for m in v), f"a non-empty subset of {list(METHODS)}"),
        restarts=get("restarts", 10, lambda v: _is_int(v) and v >= 1, "an integer >= 1"),
        cluster_seed=get("cluster_seed", 0, _is_int, "an integer"),
        seeds=get("seeds", [0], lambda v: _int_list(v) and v, "a non-empty list of integers"),
        l_grid=get("l_grid", None, lambda v: _int_list(v) and v and min(v) >= 1,
                   "a non-empty list of integers >= 1"),
        cluster_grid=get("cluster_grid", list(range(2, 11)),
                         lambda v: _int_list(v) and v and min(v) >= 1,
                         "a non-empty list of integers >= 1"),
        gamma=get("gamma", None, lambda v: _is_num(v) and v >= 0, "a nonnegative number"),
        threads=get("threads", 1, lambda v: _is_int(v) and v >= 1, "an integer >= 1"),
    )
    fz = dict(
        k=get("factorize.k", None, lambda v: _is_int(v) and v >= 1, "an integer >= 1"),
        learning_rate=get("factorize.learning_rate", 0.05, lambda v: _is_num(v) and v > 0,
                          "a positive number"),
        epochs=get("factorize.epochs", 200, lambda v: _is_int(v) and v >= 1, "an integer >= 1"),
        seed=get("factorize.seed", 0, _is_int, "an integer"),
        init_scale=get("factorize.init_scale", 0.1, lambda v: _is_num(v) and v > 0,
                       "a positive number"),
        shift_numerical=get("factorize.shift_numerical", True, lambda v: isinstance(v, bool),
                            "a boolean"),
    )
    ft = dict(
        learning_rate=get("fit.learning_rate", 1e-3, lambda v: _is_num(v) and v > 0,
                          "a positive number (eta > 0)"),
        max_iter=get("fit.max_iter", 2000, lambda v: _is_int(v) and v >= 1, "an integer >= 1"),
        tol=get("fit.tol", 1e-5, lambda v: _is_num(v) and v > 0, "a positive number"),
        init_scale=get("fit.init_scale", 0.01, lambda v: _is_num(v) and v > 0,
                       "a positive number"),
        seed=get("fit.seed", 0, _is_int, "an integer"),
        l2=get("fit.l2", 0.0, lambda v: _is_num(v) and v >= 0, "a nonnegative number"),
        backtracking=get("fit.backtracking", True, lambda v: isinstance(v, bool), "a boolean"),
        max_halvings=get("fit.max_halvings", 20, lambda v: _is_int(v) and v >= 0,
                         "an integer >= 0"),
    )

    # widths implied by the schema drive k and l checks
    p = None
    if schema is not None and Path(schema).is_file():
        try:
            p1, p2 = feature_width(load_schema(schema))
            p = p1 + p2
            if p1 < 1 or p2 < 1:
                errors.append(f"schema must declare numerical and categorical features (p1={p1}, p2={p2})")
        except Exception as exc:  # schema problems are reported, not raised
            errors.append(f"schema {schema}: {exc}")
    elif schema is not None:
        errors.append(f"schema file not found: {schema}")
    if p is not None:
        k = fz["k"]
        if _is_int(k) and k >= p:
            errors.append(
                f"factorize.k={k} violates the latent-dimension constraint k < p1 + p2 = {p}"
            )
        l = kw["n_features"]
        if _is_int(l) and l > p:
            errors.append(f"n_features={l} exceeds the number of encoded variables p={p}")
        if _int_list(kw["l_grid"]) and kw["l_grid"] and max(kw["l_grid"]) > p:
            errors.append(f"l_grid entries must be <= p={p}")
    if errors:
        raise ConfigError(errors)
    for key in ("clusters", "methods", "seeds", "cluster_grid"):
        kw[key] = tuple(kw[key])
    if kw["l_grid"] is not None:
        kw["l_grid"] = tuple(kw["l_grid"])
    if kw["gamma"] is not None:
        kw["gamma"] = float(kw["gamma"])
    for key in ("learning_rate", "init_scale"):
        fz[key] = float(fz[key])
    for key in ("learning_rate", "tol", "init_scale", "l2"):
        ft[key] = float(ft[key])
    cfg = PipelineConfig(
        data=data,
        schema=schema,
        beta=float(beta),
        epsilon=float(eps),
        out=out,
        factorize=FactorizeConfig(**fz),
        fit=FitConfig(**ft),
        **kw,
    )
    return cfg.with_p(p) if p is not None else cfg


def read_config_file(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigParseError(f"{path}: {exc}") from None


def validate_config(path, overrides=()) -> PipelineConfig:
    """Load, override and validate a config file; returns a fully defaulted PipelineConfig."""
    flat = _flatten(read_config_file(path))
    for item in overrides:
        key, value = parse_override(item) if isinstance(item, str) else item
        flat[key] = value
    return build_config(flat, base_dir=Path(path).parent)


def config_from_dict(d: dict) -> PipelineConfig:
    """Rebuild a PipelineConfig from :meth:`PipelineConfig.to_dict` output (e.g. a report)."""
    return build_config(_flatten({k: v for k, v in d.items() if v is not None}))
