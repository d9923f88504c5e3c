"""declink: drug-disease link prediction over learned drug clusters.

The package trains a dense autoencoder on a drug feature matrix, refines
k-means clusters in latent space with a Student-t / KL self-training
objective, then fits one bipartite message-passing link predictor per
cluster and reports high-confidence unknown drug-disease pairs.
"""

from .errors import (
    ConfigError,
    DataError,
    DecLinkError,
    TrainingError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "DecLinkError",
    "TrainingError",
    "__version__",
]
