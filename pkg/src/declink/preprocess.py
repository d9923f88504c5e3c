"""Feature-table ingestion, cleaning, and synthetic data generation.

The cleaning chain mirrors a typical tabular pipeline: drop rows with too
many holes, enumerate categorical columns, impute what is left with
masked-distance kNN, then z-score. Every step is deterministic; the
synthetic generator plants recoverable cluster and link structure for
end-to-end checks.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    DataError,
    EmptyResultWarning,
    ImputationError,
    IngestionError,
)
from .numerics import RngStream


class FeatureKind(str, Enum):
    NUMERIC = "num"
    CATEGORICAL = "cat"


@dataclass
class FeatureTable:
    """Per-drug feature matrix with an observation mask.

    missing_mask is True where a value is observed (the mask marks what is
    NOT missing); unobserved cells hold NaN in `values`. Categorical
    columns store integer codes; `category_tokens` maps a column name to
    the original token for each code, when tokens are known.
    """

    chemical_ids: list[str]
    feature_names: list[str]
    feature_kinds: list[FeatureKind]
    values: np.ndarray  # [n_drugs, d_features] float64
    missing_mask: np.ndarray  # [n_drugs, d_features] bool, True = observed
    category_tokens: dict[str, list[str]] = field(default_factory=dict)

    @property
    def n_drugs(self) -> int:
        return len(self.chemical_ids)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def validate(self) -> None:
        if len(set(self.chemical_ids)) != len(self.chemical_ids):
            raise DataError("chemical ids are not unique")
        if self.values.shape != (self.n_drugs, self.n_features):
            raise DataError(
                f"values shape {self.values.shape} does not match "
                f"{self.n_drugs} ids x {self.n_features} feature names"
            )
        if self.missing_mask.shape != self.values.shape:
            raise DataError("missing_mask shape does not match values")
        if len(self.feature_kinds) != self.n_features:
            raise DataError("feature_kinds length does not match feature names")
        observed = self.values[self.missing_mask]
        if observed.size and not np.all(np.isfinite(observed)):
            raise DataError("observed values must be finite")

    def copy(self) -> "FeatureTable":
        return FeatureTable(
            chemical_ids=list(self.chemical_ids),
            feature_names=list(self.feature_names),
            feature_kinds=list(self.feature_kinds),
            values=self.values.copy(),
            missing_mask=self.missing_mask.copy(),
            category_tokens={k: list(v) for k, v in self.category_tokens.items()},
        )


@dataclass
class LinkTable:
    """Known (chemical_id, disease_id) pairs, deduplicated."""

    records: list[tuple[str, str]]

    def validate(self) -> None:
        if len(set(self.records)) != len(self.records):
            raise DataError("duplicate link records")

    @property
    def n_links(self) -> int:
        return len(self.records)


@dataclass
class SynthConfig:
    n_clusters: int = 5
    drugs_per_cluster: int = 40
    diseases_per_cluster: int = 12
    feature_dim: int = 64
    noise_sigma: float = 0.5
    link_density_within: float = 0.6
    link_density_cross: float = 0.02
    missing_rate: float = 0.1
    seed: int = 7

    def validate(self) -> None:
        if min(self.n_clusters, self.drugs_per_cluster,
               self.diseases_per_cluster, self.feature_dim) < 1:
            raise ConfigError("synthetic sizes must be positive")
        if not 0.0 < self.link_density_within <= 1.0:
            raise ConfigError("link_density_within must be in (0, 1]")
        if not 0.0 <= self.link_density_cross < 1.0:
            raise ConfigError("link_density_cross must be in [0, 1)")
        if self.link_density_within <= self.link_density_cross:
            raise ConfigError("within-cluster density must exceed cross density")
        if not 0.0 <= self.missing_rate < 1.0:
            raise ConfigError("missing_rate must be in [0, 1)")
        if self.noise_sigma < 0.0:
            raise ConfigError("noise_sigma must be non-negative")


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------


def _parse_header(header: list[str], path) -> tuple[list[str], list[FeatureKind]]:
    if not header or header[0] != "chemical_id":
        raise IngestionError(f"{path}: first header column must be 'chemical_id'")
    names, kinds = [], []
    for col in header[1:]:
        name, sep, kind = col.rpartition(":")
        if not sep:
            name, kind = col, "num"  # unannotated columns default to numeric
        if kind not in ("num", "cat"):
            raise IngestionError(f"{path}: unknown column kind in {col!r}")
        names.append(name)
        kinds.append(FeatureKind(kind))
    return names, kinds


def load_feature_table(path) -> FeatureTable:
    """Read a features CSV.

    Header: ``chemical_id,<name>:num,<name>:cat,...``; an empty field is a
    missing value. Categorical tokens are coded by first appearance and the
    token list is kept so values can be decoded or re-saved losslessly.
    """
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"feature file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: empty file") from None
        names, kinds = _parse_header(header, path)
        d = len(names)
        ids: list[str] = []
        seen: set[str] = set()
        rows: list[list[float]] = []
        mask_rows: list[list[bool]] = []
        token_codes: dict[int, dict[str, int]] = {
            j: {} for j, k in enumerate(kinds) if k is FeatureKind.CATEGORICAL
        }
        for line_no, row in enumerate(reader, start=2):
            if len(row) != d + 1:
                raise IngestionError(
                    f"{path}:{line_no}: expected {d + 1} fields, got {len(row)}"
                )
            cid = row[0]
            if cid in seen:
                raise IngestionError(f"{path}:{line_no}: duplicate chemical_id {cid!r}")
            seen.add(cid)
            ids.append(cid)
            vals, obs = [], []
            for j, cell in enumerate(row[1:]):
                if cell == "":
                    vals.append(np.nan)
                    obs.append(False)
                    continue
                obs.append(True)
                if kinds[j] is FeatureKind.CATEGORICAL:
                    codes = token_codes[j]
                    if cell not in codes:
                        codes[cell] = len(codes)
                    vals.append(float(codes[cell]))
                else:
                    try:
                        value = float(cell)
                    except ValueError:
                        raise IngestionError(
                            f"{path}:{line_no}: non-numeric value {cell!r} "
                            f"in numeric column {names[j]!r}"
                        ) from None
                    if not np.isfinite(value):
                        raise IngestionError(
                            f"{path}:{line_no}: non-finite value in column {names[j]!r}"
                        )
                    vals.append(value)
            rows.append(vals)
            mask_rows.append(obs)
    values = np.array(rows, dtype=np.float64).reshape(len(ids), d)
    mask = np.array(mask_rows, dtype=bool).reshape(len(ids), d)
    tokens = {
        names[j]: sorted(codes, key=codes.get)
        for j, codes in token_codes.items()
        if codes
    }
    table = FeatureTable(ids, names, kinds, values, mask, tokens)
    table.validate()
    return table


def save_feature_table(table: FeatureTable, path) -> None:
    """Write a features CSV the loader reads back identically.

    Categorical cells are written as their original tokens when known so
    first-appearance coding reproduces the same integer codes on reload.
    """
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["chemical_id"]
            + [f"{n}:{k.value}" for n, k in zip(table.feature_names, table.feature_kinds)]
        )
        for i, cid in enumerate(table.chemical_ids):
            row = [cid]
            for j, name in enumerate(table.feature_names):
                if not table.missing_mask[i, j]:
                    row.append("")
                elif name in table.category_tokens:
                    row.append(table.category_tokens[name][int(table.values[i, j])])
                else:
                    row.append(repr(float(table.values[i, j])))
            writer.writerow(row)


def load_links(path) -> LinkTable:
    """Read a links CSV (header ``chemical_id,disease_id``); dedupes pairs."""
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"link file not found: {path}")
    records: list[tuple[str, str]] = []
    seen: set[tuple[str, str]] = set()
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: empty file") from None
        if header[:2] != ["chemical_id", "disease_id"]:
            raise IngestionError(f"{path}: expected header chemical_id,disease_id")
        for line_no, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise IngestionError(f"{path}:{line_no}: expected 2 fields")
            pair = (row[0], row[1])
            if pair not in seen:
                seen.add(pair)
                records.append(pair)
    return LinkTable(records)


def save_links(links: LinkTable, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["chemical_id", "disease_id"])
        writer.writerows(links.records)


# ---------------------------------------------------------------------------
# Cleaning steps
# ---------------------------------------------------------------------------


def filter_completeness(table: FeatureTable, threshold: float = 0.70) -> FeatureTable:
    """Keep rows whose observed fraction is >= threshold (boundary kept)."""
    if not 0.0 <= threshold <= 1.0:
        raise ConfigError(f"completeness threshold must be in [0,1], got {threshold}")
    frac = table.missing_mask.mean(axis=1) if table.n_features else np.ones(table.n_drugs)
    keep = frac >= threshold
    if not keep.any():
        warnings.warn(
            "completeness filter removed every row", EmptyResultWarning, stacklevel=2
        )
    return FeatureTable(
        chemical_ids=[c for c, k in zip(table.chemical_ids, keep) if k],
        feature_names=list(table.feature_names),
        feature_kinds=list(table.feature_kinds),
        values=table.values[keep].copy(),
        missing_mask=table.missing_mask[keep].copy(),
        category_tokens={k: list(v) for k, v in table.category_tokens.items()},
    )


def enumerate_categoricals(table: FeatureTable) -> FeatureTable:
    """Re-code categorical columns to 0..K-1 in first-appearance order.

    Numeric columns pass through untouched. The decode list per column is
    stored in category_tokens (composed with any existing token list).
    """
    out = table.copy()
    for j, kind in enumerate(table.feature_kinds):
        if kind is not FeatureKind.CATEGORICAL:
            continue
        name = table.feature_names[j]
        old_tokens = table.category_tokens.get(name)
        code_of: dict[float, int] = {}
        decode: list[str] = []
        col = out.values[:, j]
        for i in range(table.n_drugs):
            if not out.missing_mask[i, j]:
                continue
            v = float(col[i])
            if v not in code_of:
                code_of[v] = len(code_of)
                if old_tokens is not None:
                    decode.append(old_tokens[int(v)])
                else:
                    decode.append(repr(v))
            col[i] = code_of[v]
        out.category_tokens[name] = decode
    return out


def decode_categorical(table: FeatureTable, column: str) -> list[str | None]:
    """Map a categorical column's codes back to tokens (None where missing)."""
    j = table.feature_names.index(column)
    tokens = table.category_tokens[column]
    return [
        tokens[int(table.values[i, j])] if table.missing_mask[i, j] else None
        for i in range(table.n_drugs)
    ]


def knn_impute(table: FeatureTable, k: int = 5) -> FeatureTable:
    """Fill missing cells with the mean over the k nearest observing rows.

    Row distance is the Euclidean norm over mutually observed numeric
    columns divided by the shared-column count; pairs with no shared
    numeric columns sort last. Distance ties break toward the lower row
    index. Observed cells are never altered.
    """
    if k < 1:
        raise ConfigError(f"knn_impute requires k >= 1, got {k}")
    observed_per_col = table.missing_mask.sum(axis=0)
    for j, count in enumerate(observed_per_col):
        if count == 0:
            raise ImputationError(
                f"column {table.feature_names[j]!r} is observed in no row"
            )
    out = table.copy()
    if bool(table.missing_mask.all()):
        return out
    numeric = np.array(
        [kind is FeatureKind.NUMERIC for kind in table.feature_kinds], dtype=bool
    )
    vals = np.where(table.missing_mask, table.values, 0.0)
    num_mask = table.missing_mask & numeric
    n = table.n_drugs

    for i in range(n):
        missing_cols = np.flatnonzero(~table.missing_mask[i])
        if missing_cols.size == 0:
            continue
        shared = num_mask & num_mask[i]  # [n, d]
        diff = (vals - vals[i]) * shared
        shared_count = shared.sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            dist = np.sqrt((diff * diff).sum(axis=1)) / shared_count
        dist = np.where(shared_count > 0, dist, np.inf)
        dist[i] = np.inf  # a row is never its own donor
        order = np.lexsort((np.arange(n), dist))
        for j in missing_cols:
            donors = order[table.missing_mask[order, j]][:k]
            out.values[i, j] = float(table.values[donors, j].mean())
            out.missing_mask[i, j] = True
    return out


@dataclass
class ColumnStats:
    """Per-column mean/std captured by zscore_normalize; std 0 marks a
    constant (or skipped categorical) column mapped to zero shift."""

    means: np.ndarray
    stds: np.ndarray


def zscore_normalize(table: FeatureTable) -> tuple[FeatureTable, ColumnStats]:
    """Standardize numeric columns with population statistics.

    Constant columns become all zeros. Categorical code columns are left
    untouched (recorded as mean 0 / std 1 so the inverse is the identity).
    """
    if not bool(table.missing_mask.all()):
        raise DataError("zscore_normalize requires a fully observed table")
    out = table.copy()
    d = table.n_features
    means = np.zeros(d)
    stds = np.ones(d)
    for j, kind in enumerate(table.feature_kinds):
        if kind is not FeatureKind.NUMERIC:
            continue
        col = table.values[:, j]
        mu = float(col.mean())
        sigma = float(col.std())  # population std
        means[j] = mu
        stds[j] = sigma
        if sigma == 0.0:
            out.values[:, j] = 0.0
        else:
            out.values[:, j] = (col - mu) / sigma
    return out, ColumnStats(means, stds)


def zscore_inverse(values: np.ndarray, stats: ColumnStats) -> np.ndarray:
    """Undo zscore_normalize; constant columns recover their mean."""
    scale = np.where(stats.stds == 0.0, 1.0, stats.stds)
    return values * scale + stats.means


def unique_drug_view(table: FeatureTable, links: LinkTable) -> FeatureTable:
    """One feature row per chemical_id (first occurrence wins).

    Link multiplicity never duplicates drugs; disease identity stays out of
    the feature matrix entirely.
    """
    del links  # the view depends only on drug identity
    seen: set[str] = set()
    keep = []
    for i, cid in enumerate(table.chemical_ids):
        if cid not in seen:
            seen.add(cid)
            keep.append(i)
    idx = np.array(keep, dtype=int)
    return FeatureTable(
        chemical_ids=[table.chemical_ids[i] for i in keep],
        feature_names=list(table.feature_names),
        feature_kinds=list(table.feature_kinds),
        values=table.values[idx].copy(),
        missing_mask=table.missing_mask[idx].copy(),
        category_tokens={k: list(v) for k, v in table.category_tokens.items()},
    )


# ---------------------------------------------------------------------------
# Synthetic data with planted structure
# ---------------------------------------------------------------------------


def _place_centers(config: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    """Rejection-sample unit-Gaussian centers at pairwise separation
    >= 6 * noise_sigma; the center scale is independent of the noise so
    shrinking noise_sigma genuinely sharpens the clusters."""
    min_sep = 6.0 * config.noise_sigma
    centers: list[np.ndarray] = []
    attempts = 0
    max_attempts = 200 * config.n_clusters
    while len(centers) < config.n_clusters:
        if attempts >= max_attempts:
            raise DataError(
                f"could not place {config.n_clusters} cluster centers with "
                f"separation {min_sep:.3g} in {config.feature_dim} dims"
            )
        attempts += 1
        cand = rng.standard_normal(config.feature_dim)
        if all(np.linalg.norm(cand - c) >= min_sep for c in centers):
            centers.append(cand)
    return np.stack(centers)


def generate_synthetic(config: SynthConfig) -> tuple[FeatureTable, LinkTable, np.ndarray]:
    """Plant Gaussian drug clusters with block-structured disease links.

    Returns (features, links, true cluster label per drug). Drugs in
    cluster c link to cluster-c diseases with probability
    link_density_within and to all other diseases with link_density_cross;
    cells go missing independently at missing_rate. Deterministic per seed.
    """
    config.validate()
    centers = _place_centers(config, RngStream(config.seed, "synth:centers").generator())
    n_drugs = config.n_clusters * config.drugs_per_cluster
    n_diseases = config.n_clusters * config.diseases_per_cluster
    labels = np.repeat(np.arange(config.n_clusters), config.drugs_per_cluster)

    feat_rng = RngStream(config.seed, "synth:features").generator()
    values = centers[labels] + config.noise_sigma * feat_rng.standard_normal(
        (n_drugs, config.feature_dim)
    )

    chem_ids = [f"C{i:04d}" for i in range(n_drugs)]
    dis_ids = [f"D{j:04d}" for j in range(n_diseases)]
    dis_labels = np.repeat(np.arange(config.n_clusters), config.diseases_per_cluster)

    link_rng = RngStream(config.seed, "synth:links").generator()
    same = labels[:, None] == dis_labels[None, :]
    prob = np.where(same, config.link_density_within, config.link_density_cross)
    adj = link_rng.random((n_drugs, n_diseases)) < prob
    records = [
        (chem_ids[i], dis_ids[j]) for i, j in zip(*np.nonzero(adj))
    ]

    miss_rng = RngStream(config.seed, "synth:missing").generator()
    mask = miss_rng.random(values.shape) >= config.missing_rate
    values = np.where(mask, values, np.nan)

    table = FeatureTable(
        chemical_ids=chem_ids,
        feature_names=[f"f{j}" for j in range(config.feature_dim)],
        feature_kinds=[FeatureKind.NUMERIC] * config.feature_dim,
        values=values,
        missing_mask=mask,
    )
    table.validate()
    return table, LinkTable(records), labels


def save_truth_clusters(chemical_ids: list[str], labels: np.ndarray, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["chemical_id", "cluster"])
        for cid, lab in zip(chemical_ids, labels):
            writer.writerow([cid, int(lab)])
