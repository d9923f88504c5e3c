"""Exception hierarchy.

Three top-level families map onto the CLI exit codes: configuration
problems (exit 2), data problems (exit 3), and training failures (exit 4).
"""


class DecLinkError(Exception):
    """Base class for all package errors."""


class ConfigError(DecLinkError):
    """Invalid configuration: bad dimensions, rates, ratios, or paths."""


class DataError(DecLinkError):
    """Invalid or degenerate input data."""


class IngestionError(DataError):
    """Malformed CSV input (duplicate ids, ragged rows, bad header)."""


class ImputationError(DataError):
    """Imputation cannot proceed (e.g. a column observed nowhere)."""


class PartitionError(DataError):
    """A link references a drug without a cluster assignment."""


class GraphError(DataError):
    """Bipartite graph cannot be built (e.g. empty link list)."""


class SplitError(DataError):
    """Edge set too small to split."""


class SamplingError(DataError):
    """Not enough non-edges to sample the requested negatives."""


class MetricError(DataError):
    """Metric undefined for the given inputs (empty, single-class...)."""


class ValidationError(DataError):
    """Value-level contract violation (e.g. non-binary labels)."""


class TrainingError(DecLinkError):
    """Training failure (non-finite loss or gradients)."""


class InternalError(DecLinkError):
    """Inconsistent internal state (e.g. a stale backward cache)."""


class StageError(DecLinkError):
    """A pipeline stage failed; carries stage name and optional cluster id."""

    def __init__(self, stage: str, cause: BaseException, cluster_id=None):
        self.stage = stage
        self.cluster_id = cluster_id
        self.cause = cause
        where = f"stage '{stage}'"
        if cluster_id is not None:
            where += f" (cluster {cluster_id})"
        super().__init__(f"{where}: {cause}")


class DecLinkWarning(UserWarning):
    """Base class for package warnings."""


class EmptyResultWarning(DecLinkWarning):
    """An operation succeeded but produced an empty result."""
