# Walkthrough of the stages on the Heart data, one call at a time.
# Run from the repository root: python notebooks/01_walkthrough.py

import numpy as np

import mixspec
from mixspec import pipeline

cfg = mixspec.validate_config("configs/heart.toml")
data, info = pipeline.stage_ingest(cfg)
cfg = pipeline.resolve_for(cfg, data)
print(data.n, "rows,", data.p1, "numerical +", data.p2, "categorical variables")
print("encoded width:", data.values.shape[1], " l =", cfg.n_features)

# dense maps from the collective factorization
model, trace = pipeline.stage_factorize(cfg, data)
print("factorization objective:", mixspec.objective(model, data))

# one similarity per observation and pair of variables
maps = mixspec.dense_maps(model, cfg.beta)
H = mixspec.similarity_tensor(data, maps, mixspec.SimilarityConfig(cfg.epsilon)).values
print("similarity tensor:", H.shape, "range", H.min(), H.max())

# edge weights; the origin already maximizes the objective, so theta stays small
theta, fit_trace = mixspec.fit(H, cfg.fit)
ll = fit_trace.log_likelihood
print("log-likelihood", ll[0], "->", ll[-1], "over", len(ll), "iterations")
print("upper bound -n log n:", -data.n * np.log(data.n))

basis, emb = pipeline.stage_embed(cfg, data, theta)
print("Laplacian eigenvalues:", np.round(basis.eigenvalues, 4))

labels = mixspec.kmeans(emb, 2, seed=0, n_init=cfg.restarts).labels
print("Rand index:", mixspec.rand_index(data.labels, labels))
print("entropy:", mixspec.cluster_entropy(data.labels, labels))
