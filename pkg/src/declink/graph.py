"""Bipartite drug-disease graph construction, edge splitting, negatives.

Drug nodes carry the refined latent vectors; disease nodes start from
small random embeddings that the link predictor trains. Every treat edge
is materialized in both directions (drug->disease and its transpose).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import GraphError, SamplingError, SplitError
from .numerics import RngStream
from .preprocess import LinkTable


@dataclass
class BipartiteGraph:
    drug_ids: list[str]
    disease_ids: list[str]
    drug_features: np.ndarray  # [n_drugs, dim]
    disease_embeddings: np.ndarray  # [n_diseases, dim]
    edges_treat: np.ndarray  # [m, 2] (drug_idx, disease_idx)
    edges_reverse: np.ndarray  # [m, 2] (disease_idx, drug_idx)

    @property
    def n_drugs(self) -> int:
        return len(self.drug_ids)

    @property
    def n_diseases(self) -> int:
        return len(self.disease_ids)

    @property
    def n_edges(self) -> int:
        return self.edges_treat.shape[0]

    def validate(self) -> None:
        if self.edges_treat.shape != self.edges_reverse.shape:
            raise GraphError("edge direction lists differ in shape")
        if not np.array_equal(self.edges_treat[:, ::-1], self.edges_reverse):
            raise GraphError("edges_reverse is not the transpose of edges_treat")
        if self.n_edges:
            if self.edges_treat[:, 0].max() >= self.n_drugs or self.edges_treat[:, 0].min() < 0:
                raise GraphError("drug index out of range")
            if self.edges_treat[:, 1].max() >= self.n_diseases or self.edges_treat[:, 1].min() < 0:
                raise GraphError("disease index out of range")
        if self.drug_features.shape[1] != self.disease_embeddings.shape[1]:
            raise GraphError("drug and disease node dimensions differ")


@dataclass
class EdgeSplit:
    train_pos: np.ndarray
    val_pos: np.ndarray
    test_pos: np.ndarray
    train_neg: np.ndarray | None = None
    val_neg: np.ndarray | None = None
    test_neg: np.ndarray | None = None


def init_disease_embeddings(
    n: int, dim: int, seed: int, scale: float = 0.01
) -> np.ndarray:
    """i.i.d. uniform(-scale, scale) starting points, one row per disease.

    Kept small relative to z-scored drug features; these rows are trained
    by the link predictor.
    """
    if n < 1 or dim < 1:
        raise GraphError("need at least one disease and one dimension")
    rng = RngStream(seed, "disease:init").generator()
    return rng.uniform(-scale, scale, size=(n, dim))


def build_bipartite(
    chemical_ids: list[str],
    drug_vectors: np.ndarray,
    links: LinkTable,
    seed: int = 0,
    embed_scale: float = 0.01,
) -> BipartiteGraph:
    """Assemble the per-cluster bipartite graph.

    Disease node ids are the distinct targets of `links` in first-appearance
    order; disease embedding width matches the drug vectors. Both edge
    directions are materialized.
    """
    if links.n_links == 0:
        raise GraphError("cluster has no links; nothing to train on")
    drug_vectors = np.asarray(drug_vectors, dtype=np.float64)
    if drug_vectors.shape[0] != len(chemical_ids):
        raise GraphError("drug vector count does not match ids")
    drug_index = {cid: i for i, cid in enumerate(chemical_ids)}
    disease_ids: list[str] = []
    disease_index: dict[str, int] = {}
    edges = []
    for chem, dis in links.records:
        if chem not in drug_index:
            raise GraphError(f"link references unknown drug {chem!r}")
        if dis not in disease_index:
            disease_index[dis] = len(disease_ids)
            disease_ids.append(dis)
        edges.append((drug_index[chem], disease_index[dis]))
    edges_treat = np.array(edges, dtype=np.int64)
    graph = BipartiteGraph(
        drug_ids=list(chemical_ids),
        disease_ids=disease_ids,
        drug_features=drug_vectors,
        disease_embeddings=init_disease_embeddings(
            len(disease_ids), drug_vectors.shape[1], seed, embed_scale
        ),
        edges_treat=edges_treat,
        edges_reverse=edges_treat[:, ::-1].copy(),
    )
    graph.validate()
    return graph


def split_edges(
    graph: BipartiteGraph,
    ratios: tuple[float, float, float] = (0.7, 0.1, 0.2),
    seed: int = 0,
) -> EdgeSplit:
    """Shuffle once, cut contiguously: floor(n*r) for val/test with the
    remainder going to train. Reverse edges always follow their forward
    edge, so only forward edges are split."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise SplitError(f"ratios must sum to 1, got {ratios}")
    m = graph.n_edges
    if m < 3:
        raise SplitError(f"need at least 3 edges to split, have {m}")
    n_val = int(m * ratios[1])
    n_test = int(m * ratios[2])
    n_train = m - n_val - n_test
    rng = RngStream(seed, "split").generator()
    perm = rng.permutation(m)
    edges = graph.edges_treat[perm]
    return EdgeSplit(
        train_pos=edges[:n_train].copy(),
        val_pos=edges[n_train : n_train + n_val].copy(),
        test_pos=edges[n_train + n_val :].copy(),
    )


def sample_negatives(
    graph: BipartiteGraph,
    count: int,
    rng,
    forbidden: set[tuple[int, int]] | None = None,
) -> np.ndarray:
    """Uniform (drug, disease) pairs that are neither positive edges nor
    previously sampled. `rng` is a Generator or RngStream; `forbidden`
    defaults to all positive edges and is not mutated.
    """
    if isinstance(rng, RngStream):
        rng = rng.generator()
    positives = {(int(a), int(b)) for a, b in graph.edges_treat}
    excluded = positives if forbidden is None else (positives | forbidden)
    capacity = graph.n_drugs * graph.n_diseases - len(excluded)
    if count > capacity:
        raise SamplingError(
            f"requested {count} negatives but only {capacity} non-edges exist "
            f"(short by {count - capacity})"
        )
    out: list[tuple[int, int]] = []
    taken: set[tuple[int, int]] = set()
    # Rejection sampling stays uniform over the remaining non-edges.
    while len(out) < count:
        need = count - len(out)
        drugs = rng.integers(0, graph.n_drugs, size=2 * need + 8)
        diseases = rng.integers(0, graph.n_diseases, size=2 * need + 8)
        for a, b in zip(drugs, diseases):
            pair = (int(a), int(b))
            if pair in excluded or pair in taken:
                continue
            taken.add(pair)
            out.append(pair)
            if len(out) == count:
                break
    return np.array(out, dtype=np.int64).reshape(-1, 2)


def attach_negatives(graph: BipartiteGraph, split: EdgeSplit, seed: int) -> EdgeSplit:
    """Fix val/test negatives once (stable metrics) and draw an initial
    train negative set; trainers may resample train negatives per epoch
    with sample_negatives directly."""
    rng = RngStream(seed, "negatives").generator()
    val_neg = sample_negatives(graph, len(split.val_pos), rng)
    so_far = {(int(a), int(b)) for a, b in val_neg}
    test_neg = sample_negatives(graph, len(split.test_pos), rng, forbidden=so_far)
    so_far |= {(int(a), int(b)) for a, b in test_neg}
    train_neg = sample_negatives(graph, len(split.train_pos), rng, forbidden=so_far)
    split.train_neg = train_neg
    split.val_neg = val_neg
    split.test_neg = test_neg
    return split


def dump_graph(graph: BipartiteGraph, path, seed: int | None = None) -> None:
    """Debug JSON dump: ids, edges, and the seed used to build the graph."""
    record = {
        "drug_ids": graph.drug_ids,
        "disease_ids": graph.disease_ids,
        "edges_treat": graph.edges_treat.tolist(),
        "edges_reverse": graph.edges_reverse.tolist(),
        "seed": seed,
    }
    Path(path).write_text(json.dumps(record, indent=2))
