"""End-to-end orchestration: preprocess, embed, cluster, per-cluster link
prediction, and a ranked report of novel drug-disease candidates.

Every stochastic stage draws its seed from master_seed through a labeled
hash, so one integer pins every artifact byte. Per-cluster streams hash
the cluster id, which makes cluster processing order irrelevant.
"""
from __future__ import annotations

import csv
import json
import platform
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .autoencoder import (
    AutoencoderModel,
    LatentEmbedding,
    TrainConfig,
    build_halving_architecture,
    encode,
    export_embeddings,
    save_checkpoint,
    train_autoencoder,
)
from .dec import (
    ClusterDataset,
    ClusterPartition,
    DecConfig,
    k_sweep,
    partition_clusters,
    save_clusters,
    save_sweep,
    train_dec,
)
from .errors import (
    ConfigError,
    DataError,
    DecLinkError,
    GraphError,
    SamplingError,
    SplitError,
    StageError,
)
from .gnn import (
    GnnTrainConfig,
    load_gnn_checkpoint,
    predict_links,
    save_gnn_checkpoint,
    save_history,
    train_gnn,
)
from .graph import BipartiteGraph, EdgeSplit, attach_negatives, build_bipartite, split_edges
from .metrics import evaluate
from .numerics import derive_seed
from .preprocess import (
    FeatureTable,
    LinkTable,
    enumerate_categoricals,
    filter_completeness,
    knn_impute,
    load_feature_table,
    load_links,
    save_feature_table,
    save_links,
    unique_drug_view,
    zscore_normalize,
)

MANIFEST_FORMAT = "declink-manifest-v1"
CONFIG_FORMAT = "declink-config-v1"


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class PreprocessParams:
    completeness_threshold: float = 0.70
    knn_k: int = 5


@dataclass
class AutoencoderParams:
    latent_dim: int = 8
    lr: float = 1e-3
    max_epochs: int = 400
    patience: int = 10
    batch_size: int | None = None


@dataclass
class DecParams:
    k: int | None = None  # fixed cluster count; None runs the sweep
    k_min: int = 2
    k_max: int = 12  # exclusive
    lr: float = 1e-3
    update_interval: int = 20
    tol: float = 1e-3
    max_epochs: int = 200


@dataclass
class GnnParams:
    lr: float = 1e-3
    weight_decay: float = 0.0
    hidden_dim: int = 32
    n_layers: int = 3
    dropout: float = 0.1
    max_epochs: int = 200
    patience: int = 10


@dataclass
class RankingParams:
    probability_threshold: float = 0.99


@dataclass
class PipelineConfig:
    features_path: str
    links_path: str
    output_dir: str
    master_seed: int = 7
    preprocess: PreprocessParams = field(default_factory=PreprocessParams)
    autoencoder: AutoencoderParams = field(default_factory=AutoencoderParams)
    dec: DecParams = field(default_factory=DecParams)
    gnn: GnnParams = field(default_factory=GnnParams)
    ranking: RankingParams = field(default_factory=RankingParams)

    def validate(self) -> None:
        if not self.features_path or not self.links_path or not self.output_dir:
            raise ConfigError("features_path, links_path, and output_dir are required")
        if not 0.5 < self.preprocess.completeness_threshold < 1.0:
            raise ConfigError("completeness_threshold must be in (0.5, 1)")
        if self.preprocess.knn_k < 1:
            raise ConfigError("knn_k must be >= 1")
        if self.autoencoder.latent_dim < 1:
            raise ConfigError("latent_dim must be positive")
        if not 0.0 < self.ranking.probability_threshold < 1.0:
            raise ConfigError("probability_threshold must be in (0, 1)")
        if self.dec.k is not None and self.dec.k < 2:
            raise ConfigError("fixed k must be >= 2")
        if self.dec.k is None and not 2 <= self.dec.k_min < self.dec.k_max:
            raise ConfigError("sweep range requires 2 <= k_min < k_max")
        self.gnn_train_config(seed=0).validate()

    def gnn_train_config(self, seed: int) -> GnnTrainConfig:
        g = self.gnn
        return GnnTrainConfig(
            lr=g.lr, weight_decay=g.weight_decay, hidden_dim=g.hidden_dim,
            n_layers=g.n_layers, dropout=g.dropout, max_epochs=g.max_epochs,
            patience=g.patience, seed=seed,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["format"] = CONFIG_FORMAT
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        data = dict(data)
        data.pop("format", None)
        blocks = {
            "preprocess": PreprocessParams,
            "autoencoder": AutoencoderParams,
            "dec": DecParams,
            "gnn": GnnParams,
            "ranking": RankingParams,
        }
        kwargs: dict = {}
        for name, typ in blocks.items():
            block = data.pop(name, {})
            if not isinstance(block, dict):
                raise ConfigError(f"config block {name!r} must be an object")
            valid = {f for f in typ.__dataclass_fields__}
            unknown = set(block) - valid
            if unknown:
                raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
            kwargs[name] = typ(**block)
        scalar_fields = {"features_path", "links_path", "output_dir", "master_seed"}
        unknown = set(data) - scalar_fields
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        missing = {"features_path", "links_path", "output_dir"} - set(data)
        if missing:
            raise ConfigError(f"missing config keys: {sorted(missing)}")
        config = cls(**data, **kwargs)
        config.validate()
        return config

    @classmethod
    def from_json(cls, path) -> "PipelineConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config root must be a JSON object")
        return cls.from_dict(data)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


# ---------------------------------------------------------------------------
# Ranked predictions
# ---------------------------------------------------------------------------


@dataclass
class RankedPredictions:
    """Globally ranked candidate links plus the high-confidence slice.

    Records are (cluster_id, chemical_id, disease_id, probability, rank)
    sorted by descending probability; ties fall back to (chemical_id,
    disease_id) lexicographic. Ranks are 1-based and shared between the
    full list and the thresholded slice.
    """

    records: list[tuple[int, str, str, float, int]]
    threshold: float
    confident: list[tuple[int, str, str, float, int]]


def rank_and_filter(
    raw: list[tuple[int, str, str, float]], threshold: float = 0.99
) -> RankedPredictions:
    if not 0.0 < threshold < 1.0:
        raise ConfigError("probability threshold must be in (0, 1)")
    for _, _, _, prob in raw:
        if not 0.0 < prob < 1.0:
            raise DataError(f"prediction probability {prob} outside (0, 1)")
    ordered = sorted(raw, key=lambda r: (-r[3], r[1], r[2]))
    records = [
        (cid, chem, dis, float(prob), rank)
        for rank, (cid, chem, dis, prob) in enumerate(ordered, start=1)
    ]
    confident = [r for r in records if r[3] >= threshold]
    return RankedPredictions(records, threshold, confident)


def enumerate_candidates(graph: BipartiteGraph, train_edges: np.ndarray) -> np.ndarray:
    """Every drug x disease pair in the cluster except training positives.

    Held-out (val/test) positives stay in, so known links the model never
    saw can resurface in the ranking.
    """
    banned = {(int(a), int(b)) for a, b in np.asarray(train_edges).reshape(-1, 2)}
    pairs = [
        (i, j)
        for i in range(graph.n_drugs)
        for j in range(graph.n_diseases)
        if (i, j) not in banned
    ]
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


def save_predictions(ranked: RankedPredictions, path, confident_path=None) -> None:
    header = ["cluster_id", "chemical_id", "disease_id", "probability", "rank"]

    def _write(rows, target):
        with Path(target).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for cid, chem, dis, prob, rank in rows:
                writer.writerow([cid, chem, dis, repr(float(prob)), rank])

    _write(ranked.records, path)
    if confident_path is not None:
        _write(ranked.confident, confident_path)


# ---------------------------------------------------------------------------
# Stage helpers
# ---------------------------------------------------------------------------


def _out(config: PipelineConfig) -> Path:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def stage_preprocess(config: PipelineConfig) -> tuple[FeatureTable, LinkTable]:
    """Load, filter, enumerate, impute, normalize; persist the results."""
    out = _out(config)
    raw = load_feature_table(config.features_path)
    links = load_links(config.links_path)
    table = unique_drug_view(raw, links)
    table = filter_completeness(table, config.preprocess.completeness_threshold)
    table = enumerate_categoricals(table)
    table = knn_impute(table, k=config.preprocess.knn_k)
    table, _stats = zscore_normalize(table)
    surviving = set(table.chemical_ids)
    links = LinkTable([r for r in links.records if r[0] in surviving])
    save_feature_table(table, out / "processed_features.csv")
    save_links(links, out / "processed_links.csv")
    return table, links


def stage_autoencoder(
    config: PipelineConfig, table: FeatureTable
) -> AutoencoderModel:
    out = _out(config)
    spec = build_halving_architecture(table.n_features, config.autoencoder.latent_dim)
    ae = config.autoencoder
    train_config = TrainConfig(
        lr=ae.lr, max_epochs=ae.max_epochs, patience=ae.patience,
        batch_size=ae.batch_size, seed=derive_seed(config.master_seed, "autoencoder"),
    )
    model, history = train_autoencoder(table, spec, train_config)
    save_checkpoint(model, out / "autoencoder.npz")
    with (out / "ae_history.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss"])
        for epoch, loss in enumerate(history):
            writer.writerow([epoch, repr(float(loss))])
    return model


def stage_cluster(
    config: PipelineConfig,
    model: AutoencoderModel,
    table: FeatureTable,
    links: LinkTable,
) -> tuple[LatentEmbedding, ClusterPartition, int]:
    """Pick k (sweep or fixed), refine with the clustering objective,
    partition drugs and links, and persist embeddings/clusters/sweep."""
    out = _out(config)
    seed = derive_seed(config.master_seed, "dec")
    base = encode(model, table)
    if config.dec.k is not None:
        k = config.dec.k
        curve: list[tuple[int, float]] = []
    else:
        curve, k = k_sweep(
            base, range(config.dec.k_min, config.dec.k_max), seed=seed
        )
    dec_config = DecConfig(
        lr=config.dec.lr, update_interval=config.dec.update_interval,
        tol=config.dec.tol, max_epochs=config.dec.max_epochs, seed=seed,
    )
    refined, clusters, history = train_dec(model, table, k, dec_config)
    partition = partition_clusters(refined, clusters.hard_assignments, links)
    export_embeddings(refined, out / "embeddings.csv")
    save_clusters(refined.chemical_ids, clusters.hard_assignments, out / "clusters.csv")
    save_sweep(curve if curve else [(k, clusters.silhouette)], out / "sweep.csv")
    with (out / "dec_history.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "kl_divergence"])
        for epoch, kl in enumerate(history):
            writer.writerow([epoch, repr(float(kl))])
    return refined, partition, k


def cluster_seeds(master_seed: int, cluster_id: int) -> dict:
    label = f"cluster={cluster_id}"
    return {
        "graph": derive_seed(master_seed, f"graph:{label}"),
        "split": derive_seed(master_seed, f"split:{label}"),
        "negatives": derive_seed(master_seed, f"negatives:{label}"),
        "gnn": derive_seed(master_seed, f"gnn:{label}"),
    }


def build_cluster_graph(
    dataset: ClusterDataset, master_seed: int
) -> tuple[BipartiteGraph, EdgeSplit]:
    """Deterministic graph + split + negatives for one cluster."""
    seeds = cluster_seeds(master_seed, dataset.cluster_id)
    graph = build_bipartite(
        dataset.chemical_ids, dataset.vectors, dataset.links, seed=seeds["graph"]
    )
    split = split_edges(graph, seed=seeds["split"])
    split = attach_negatives(graph, split, seed=seeds["negatives"])
    return graph, split


@dataclass
class ClusterOutcome:
    cluster_id: int
    skipped: bool = False
    reason: str = ""
    n_drugs: int = 0
    n_diseases: int = 0
    n_links: int = 0
    metrics: dict = field(default_factory=dict)


def _write_cluster_metrics(report, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "accuracy", "precision", "recall", "f1", "roc_auc",
            "tp", "fp", "tn", "fn",
        ])
        writer.writerow([
            repr(report.accuracy), repr(report.precision), repr(report.recall),
            repr(report.f1), repr(report.roc_auc), report.tp, report.fp,
            report.tn, report.fn,
        ])


def run_cluster_gnn(
    config: PipelineConfig, dataset: ClusterDataset
) -> tuple[ClusterOutcome, list[tuple[int, str, str, float]]]:
    """Train, evaluate, and score candidates for a single cluster.

    Structurally empty clusters (no links, or too few to split) are
    reported as skipped rather than failing the run.
    """
    out = _out(config)
    outcome = ClusterOutcome(
        cluster_id=dataset.cluster_id,
        n_drugs=len(dataset.chemical_ids),
        n_links=dataset.links.n_links,
    )
    if dataset.links.n_links == 0:
        outcome.skipped = True
        outcome.reason = "no links"
        return outcome, []
    try:
        graph, split = build_cluster_graph(dataset, config.master_seed)
        outcome.n_diseases = graph.n_diseases
        seeds = cluster_seeds(config.master_seed, dataset.cluster_id)
        gnn_config = config.gnn_train_config(seed=seeds["gnn"])
        model, history = train_gnn(graph, split, gnn_config)
    except (GraphError, SplitError, SamplingError) as exc:
        outcome.skipped = True
        outcome.reason = str(exc)
        return outcome, []

    cluster_dir = out / f"cluster_{dataset.cluster_id}"
    cluster_dir.mkdir(parents=True, exist_ok=True)
    save_history(history, cluster_dir / "history.csv")
    save_gnn_checkpoint(model, cluster_dir / "gnn.npz")

    test_edges = np.concatenate([split.test_pos, split.test_neg])
    test_labels = np.concatenate([
        np.ones(len(split.test_pos)), np.zeros(len(split.test_neg))
    ])
    report = evaluate(predict_links(model, graph, test_edges), test_labels)
    _write_cluster_metrics(report, cluster_dir / "metrics.csv")
    outcome.metrics = {
        "accuracy": report.accuracy, "precision": report.precision,
        "recall": report.recall, "f1": report.f1, "roc_auc": report.roc_auc,
    }

    candidates = enumerate_candidates(graph, split.train_pos)
    probs = predict_links(model, graph, candidates)
    records = [
        (dataset.cluster_id, graph.drug_ids[int(i)], graph.disease_ids[int(j)],
         float(p))
        for (i, j), p in zip(candidates, probs)
    ]
    return outcome, records


def stage_gnn(
    config: PipelineConfig,
    partition: ClusterPartition,
    order: list[int] | None = None,
) -> tuple[list[ClusterOutcome], RankedPredictions]:
    """Per-cluster training and candidate scoring, then one global ranking.

    `order` exists to demonstrate order independence; results never depend
    on it because every cluster derives its own seed family.
    """
    by_id = {c.cluster_id: c for c in partition.clusters}
    ids = order if order is not None else sorted(by_id)
    if sorted(ids) != sorted(by_id):
        raise ConfigError("order must permute the cluster ids exactly")
    outcomes = []
    merged: list[tuple[int, str, str, float]] = []
    for cid in ids:
        outcome, records = run_cluster_gnn(config, by_id[cid])
        outcomes.append(outcome)
        merged.extend(records)
    ranked = rank_and_filter(merged, config.ranking.probability_threshold)
    out = _out(config)
    save_predictions(
        ranked, out / "predictions.csv", out / "predictions_confident.csv"
    )
    outcomes.sort(key=lambda o: o.cluster_id)
    return outcomes, ranked


def run_pipeline(config: PipelineConfig) -> dict:
    """Execute every stage; return (and write) the run manifest.

    A failing stage still writes the manifest with an `error` block so the
    partial artifacts remain interpretable, then surfaces a StageError.
    """
    config.validate()
    out = _out(config)
    manifest: dict = {
        "format": MANIFEST_FORMAT,
        "config": config.to_dict(),
        "versions": {
            "package": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
        "seeds": {
            "master": config.master_seed,
            "autoencoder": derive_seed(config.master_seed, "autoencoder"),
            "dec": derive_seed(config.master_seed, "dec"),
            "clusters": {},
        },
        "stages": {},
        "clusters": [],
        "warnings": [],
    }

    def _finish_stage(name: str, started: float, artifacts: list[str]) -> None:
        manifest["stages"][name] = {
            "wall_time_s": round(time.monotonic() - started, 3),
            "artifacts": artifacts,
        }

    stage = "preprocess"
    cluster_id = None
    try:
        t0 = time.monotonic()
        table, links = stage_preprocess(config)
        _finish_stage(stage, t0, ["processed_features.csv", "processed_links.csv"])

        stage = "autoencoder"
        t0 = time.monotonic()
        model = stage_autoencoder(config, table)
        _finish_stage(stage, t0, ["autoencoder.npz", "ae_history.csv"])

        stage = "cluster"
        t0 = time.monotonic()
        refined, partition, k = stage_cluster(config, model, table, links)
        manifest["selected_k"] = k
        _finish_stage(stage, t0, [
            "embeddings.csv", "clusters.csv", "sweep.csv", "dec_history.csv",
        ])

        stage = "gnn"
        t0 = time.monotonic()
        for dataset in partition.clusters:
            manifest["seeds"]["clusters"][str(dataset.cluster_id)] = cluster_seeds(
                config.master_seed, dataset.cluster_id
            )
        outcomes, ranked = stage_gnn(config, partition)
        artifacts = ["predictions.csv", "predictions_confident.csv"]
        for outcome in outcomes:
            entry = asdict(outcome)
            manifest["clusters"].append(entry)
            if outcome.skipped:
                manifest["warnings"].append(
                    f"cluster {outcome.cluster_id} skipped: {outcome.reason}"
                )
            else:
                artifacts.append(f"cluster_{outcome.cluster_id}/")
        manifest["n_predictions"] = len(ranked.records)
        manifest["n_confident"] = len(ranked.confident)
        _finish_stage(stage, t0, artifacts)
    except DecLinkError as exc:
        if isinstance(exc, StageError):
            stage, cluster_id = exc.stage, exc.cluster_id
        manifest["error"] = {
            "stage": stage,
            "cluster_id": cluster_id,
            "message": str(exc),
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
        if isinstance(exc, StageError):
            raise
        raise StageError(stage, exc, cluster_id) from exc

    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


# ---------------------------------------------------------------------------
# Artifact loaders (stage-by-stage CLI entry points)
# ---------------------------------------------------------------------------


def load_embeddings_csv(path) -> LatentEmbedding:
    path = Path(path)
    if not path.exists():
        raise DataError(f"embeddings file not found: {path}")
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "chemical_id":
        raise DataError(f"{path} is not an embeddings table")
    ids = [row[0] for row in rows[1:]]
    vectors = np.array([[float(x) for x in row[1:]] for row in rows[1:]])
    return LatentEmbedding(chemical_ids=ids, vectors=vectors)


def load_clusters_csv(path) -> dict[str, int]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"clusters file not found: {path}")
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["chemical_id", "cluster_id"]:
        raise DataError(f"{path} is not a cluster assignment table")
    return {row[0]: int(row[1]) for row in rows[1:]}


def load_partition(config: PipelineConfig) -> ClusterPartition:
    """Rebuild the per-cluster datasets from persisted artifacts."""
    out = Path(config.output_dir)
    embedding = load_embeddings_csv(out / "embeddings.csv")
    assignments = load_clusters_csv(out / "clusters.csv")
    links = load_links(out / "processed_links.csv")
    labels = []
    for cid in embedding.chemical_ids:
        if cid not in assignments:
            raise DataError(f"drug {cid!r} missing from clusters.csv")
        labels.append(assignments[cid])
    return partition_clusters(embedding, np.array(labels), links)


def predict_from_checkpoints(config: PipelineConfig) -> RankedPredictions:
    """Re-score candidates using saved per-cluster checkpoints;
    graph/split reconstruction is seed-deterministic so no retraining."""
    out = Path(config.output_dir)
    partition = load_partition(config)
    merged: list[tuple[int, str, str, float]] = []
    for dataset in partition.clusters:
        ckpt = out / f"cluster_{dataset.cluster_id}" / "gnn.npz"
        if not ckpt.exists():
            continue  # skipped cluster
        if dataset.links.n_links == 0:
            continue
        try:
            graph, split = build_cluster_graph(dataset, config.master_seed)
        except (GraphError, SplitError, SamplingError):
            continue
        model = load_gnn_checkpoint(ckpt)
        candidates = enumerate_candidates(graph, split.train_pos)
        probs = predict_links(model, graph, candidates)
        merged.extend(
            (dataset.cluster_id, graph.drug_ids[int(i)], graph.disease_ids[int(j)],
             float(p))
            for (i, j), p in zip(candidates, probs)
        )
    ranked = rank_and_filter(merged, config.ranking.probability_threshold)
    save_predictions(
        ranked, out / "predictions.csv", out / "predictions_confident.csv"
    )
    return ranked


# ---------------------------------------------------------------------------
# Hyperparameter grid
# ---------------------------------------------------------------------------

GRID_COLUMNS = [
    "n_layers", "lr", "weight_decay", "dropout", "hidden_dim",
    "accuracy", "precision", "recall", "f1", "roc_auc", "error",
]


def default_grid_variations() -> list[dict]:
    """One-at-a-time deviations from the optimal configuration, plus the
    baseline itself as the first row."""
    rows: list[dict] = [{}]
    rows += [{"n_layers": n} for n in (1, 2, 4, 5)]
    rows += [{"lr": v} for v in (0.01, 0.005)]
    rows += [{"weight_decay": v} for v in (1e-3, 1e-4, 1e-5, 1e-6)]
    rows += [{"dropout": v} for v in (0.2, 0.3, 0.4, 0.5)]
    rows += [{"hidden_dim": v} for v in (16, 64)]
    return rows


def hyperparameter_grid(
    graph: BipartiteGraph,
    split: EdgeSplit,
    base: GnnTrainConfig,
    variations: list[dict],
) -> list[dict]:
    """Train one model per variation and report held-out test metrics.

    A failed run keeps its row (metrics empty, error filled) so the rest
    of the grid still completes.
    """
    test_edges = np.concatenate([split.test_pos, split.test_neg])
    test_labels = np.concatenate([
        np.ones(len(split.test_pos)), np.zeros(len(split.test_neg))
    ])
    rows = []
    for variation in variations:
        unknown = set(variation) - set(base.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown grid fields: {sorted(unknown)}")
        config = replace(base, **variation)
        row = {
            "n_layers": config.n_layers, "lr": config.lr,
            "weight_decay": config.weight_decay, "dropout": config.dropout,
            "hidden_dim": config.hidden_dim, "accuracy": "", "precision": "",
            "recall": "", "f1": "", "roc_auc": "", "error": "",
        }
        try:
            model, _history = train_gnn(graph, split, config)
            report = evaluate(predict_links(model, graph, test_edges), test_labels)
            row.update(
                accuracy=report.accuracy, precision=report.precision,
                recall=report.recall, f1=report.f1, roc_auc=report.roc_auc,
            )
        except DecLinkError as exc:
            row["error"] = str(exc)
        rows.append(row)
    return rows


def largest_cluster(partition: ClusterPartition) -> ClusterDataset:
    """Largest by link count; drug count only breaks exact ties."""
    if not partition.clusters:
        raise DataError("partition has no clusters")
    return max(
        partition.clusters,
        key=lambda c: (c.links.n_links, len(c.chemical_ids), -c.cluster_id),
    )


def save_grid(rows: list[dict], path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(GRID_COLUMNS)
        for row in rows:
            writer.writerow([
                row[c] if not isinstance(row[c], float) else repr(row[c])
                for c in GRID_COLUMNS
            ])
