"""Command-line interface: stage-by-stage subcommands plus run-all.

Exit codes: 0 success, 2 configuration problem, 3 data problem,
4 training failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .autoencoder import load_checkpoint
from .errors import (
    ConfigError,
    DataError,
    DecLinkError,
    StageError,
    TrainingError,
)
from .gnn import GnnTrainConfig
from .numerics import derive_seed
from .pipeline import (
    PipelineConfig,
    default_grid_variations,
    build_cluster_graph,
    hyperparameter_grid,
    largest_cluster,
    load_partition,
    predict_from_checkpoints,
    run_pipeline,
    save_grid,
    stage_autoencoder,
    stage_cluster,
    stage_gnn,
    stage_preprocess,
)
from .preprocess import (
    SynthConfig,
    generate_synthetic,
    load_feature_table,
    load_links,
    save_feature_table,
    save_links,
    save_truth_clusters,
)


def _exit_code(exc: DecLinkError) -> int:
    if isinstance(exc, StageError):
        cause = exc.cause
        if isinstance(cause, DecLinkError):
            return _exit_code(cause)
        return 1
    if isinstance(exc, ConfigError):
        return 2
    if isinstance(exc, DataError):
        return 3
    if isinstance(exc, TrainingError):
        return 4
    return 1


def _load_config(args) -> PipelineConfig:
    config = PipelineConfig.from_json(args.config)
    if getattr(args, "seed", None) is not None:
        config.master_seed = args.seed
    if getattr(args, "output_dir", None) is not None:
        config.output_dir = args.output_dir
    config.validate()
    return config


def _loaded_inputs(config: PipelineConfig):
    out = Path(config.output_dir)
    table = load_feature_table(out / "processed_features.csv")
    links = load_links(out / "processed_links.csv")
    return table, links


def _add_config_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="pipeline config JSON")
    parser.add_argument("--seed", type=int, default=None,
                        help="override master_seed")
    parser.add_argument("--output-dir", default=None,
                        help="override output directory")


def _cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = SynthConfig(
        n_clusters=args.clusters, drugs_per_cluster=args.drugs,
        diseases_per_cluster=args.diseases, feature_dim=args.dim,
        noise_sigma=args.noise, link_density_within=args.within,
        link_density_cross=args.cross, missing_rate=args.missing,
        seed=args.seed,
    )
    table, links, labels = generate_synthetic(config)
    save_feature_table(table, out / "features.csv")
    save_links(links, out / "links.csv")
    save_truth_clusters(table.chemical_ids, labels, out / "truth_clusters.csv")
    print(f"wrote features.csv, links.csv, truth_clusters.csv to {out}")
    return 0


def _cmd_preprocess(args) -> int:
    config = _load_config(args)
    table, links = stage_preprocess(config)
    print(f"processed {table.n_drugs} drugs x {table.n_features} features, "
          f"{links.n_links} links -> {config.output_dir}")
    return 0


def _cmd_train_ae(args) -> int:
    config = _load_config(args)
    table, _links = _loaded_inputs(config)
    stage_autoencoder(config, table)
    print(f"autoencoder checkpoint and history written to {config.output_dir}")
    return 0


def _cmd_cluster(args) -> int:
    config = _load_config(args)
    table, links = _loaded_inputs(config)
    model = load_checkpoint(Path(config.output_dir) / "autoencoder.npz")
    _refined, partition, k = stage_cluster(config, model, table, links)
    sizes = {c.cluster_id: len(c.chemical_ids) for c in partition.clusters}
    print(f"selected k={k}; cluster sizes {sizes}")
    return 0


def _cmd_train_gnn(args) -> int:
    config = _load_config(args)
    partition = load_partition(config)
    outcomes, ranked = stage_gnn(config, partition)
    for outcome in outcomes:
        if outcome.skipped:
            print(f"cluster {outcome.cluster_id}: skipped ({outcome.reason})")
        else:
            print(f"cluster {outcome.cluster_id}: "
                  f"roc_auc={outcome.metrics['roc_auc']:.4f} "
                  f"f1={outcome.metrics['f1']:.4f}")
    print(f"{len(ranked.records)} candidates ranked, "
          f"{len(ranked.confident)} above threshold")
    return 0


def _cmd_grid(args) -> int:
    config = _load_config(args)
    partition = load_partition(config)
    target = largest_cluster(partition)
    graph, split = build_cluster_graph(target, config.master_seed)
    base = config.gnn_train_config(
        seed=derive_seed(config.master_seed, f"grid:cluster={target.cluster_id}")
    )
    rows = hyperparameter_grid(graph, split, base, default_grid_variations())
    path = Path(config.output_dir) / "grid.csv"
    save_grid(rows, path)
    print(f"{len(rows)} grid rows (largest cluster {target.cluster_id}) -> {path}")
    return 0


def _cmd_predict(args) -> int:
    config = _load_config(args)
    ranked = predict_from_checkpoints(config)
    print(f"{len(ranked.records)} candidates ranked, "
          f"{len(ranked.confident)} above threshold "
          f"-> {Path(config.output_dir) / 'predictions.csv'}")
    return 0


def _cmd_run_all(args) -> int:
    config = _load_config(args)
    manifest = run_pipeline(config)
    print(f"selected k={manifest['selected_k']}")
    for warning in manifest["warnings"]:
        print(f"warning: {warning}")
    print(f"{manifest['n_predictions']} candidates ranked, "
          f"{manifest['n_confident']} above threshold")
    print(f"manifest -> {Path(config.output_dir) / 'manifest.json'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="declink",
        description="Drug-disease link prediction over learned drug clusters",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate a planted synthetic dataset")
    synth.add_argument("--out", required=True)
    synth.add_argument("--seed", type=int, default=7)
    synth.add_argument("--clusters", type=int, default=5)
    synth.add_argument("--drugs", type=int, default=40)
    synth.add_argument("--diseases", type=int, default=12)
    synth.add_argument("--dim", type=int, default=64)
    synth.add_argument("--noise", type=float, default=0.5)
    synth.add_argument("--within", type=float, default=0.6)
    synth.add_argument("--cross", type=float, default=0.02)
    synth.add_argument("--missing", type=float, default=0.1)
    synth.set_defaults(func=_cmd_synth)

    for name, func, help_text in (
        ("preprocess", _cmd_preprocess, "filter, impute, and normalize features"),
        ("train-ae", _cmd_train_ae, "train the reconstruction autoencoder"),
        ("cluster", _cmd_cluster, "sweep k, refine clusters, partition drugs"),
        ("train-gnn", _cmd_train_gnn, "train per-cluster link predictors"),
        ("grid", _cmd_grid, "hyperparameter grid on the largest cluster"),
        ("predict", _cmd_predict, "re-rank candidates from saved checkpoints"),
        ("run-all", _cmd_run_all, "run every stage end to end"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        _add_config_args(cmd)
        cmd.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DecLinkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
