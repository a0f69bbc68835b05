"""Graph spectral features for mixed numerical and categorical data.

Observations are encoded (scaled numerical block, +/-1 one-hot block),
factorized into dense maps, turned into a per-observation similarity for
every pair of variables, and used to fit edge weights of a complete graph
on the variables. The graph Laplacian's eigenvectors then give a Fourier
basis in which every observation is re-expressed before clustering.
"""

from .clustering import (ClusterAssignment, gower_dissimilarity, kmeans, kmedoid, kprototype,
                         pca_features)
from .config import PipelineConfig, validate_config
from .dataset import ColumnSchema, Kind, MixedDataMatrix, encode, ingest, load_csv, load_schema, scale
from .errors import MixspecError
from .factorization import DenseMaps, FactorizeConfig, FactorModel, dense_maps, factorize, objective
from .graph_model import FitConfig, FitTrace, edge_scores, fit, gradient, pseudo_log_likelihood
from .metrics import (MetricsReport, cluster_entropy, cluster_separability, covariance_eigenvalues,
                      eigen_diffusion, rand_index)
from .pipeline import RunReport, eigen_diffusion_sweep, run_pipeline, separability_sweep
from .similarity import SimilarityConfig, SimilarityTensor, g, pair_similarity, similarity_tensor
from .spectral import SpectralBasis, eigendecompose, laplacian, symmetrize_abs, transform

__version__ = "0.1.0"
