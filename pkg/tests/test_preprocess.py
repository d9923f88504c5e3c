import math

import numpy as np
import pytest

from declink.errors import ConfigError, DataError, EmptyResultWarning, ImputationError, IngestionError
from declink.numerics import RngStream
from declink.preprocess import (
    ColumnStats,
    FeatureKind,
    FeatureTable,
    LinkTable,
    SynthConfig,
    decode_categorical,
    enumerate_categoricals,
    filter_completeness,
    generate_synthetic,
    knn_impute,
    load_feature_table,
    load_links,
    save_feature_table,
    save_links,
    unique_drug_view,
    zscore_inverse,
    zscore_normalize,
)

from _oracles import knn_impute_brute


def numeric_table(values, mask=None, ids=None):
    values = np.asarray(values, dtype=float)
    n, d = values.shape
    if mask is None:
        mask = np.isfinite(values)
    values = np.where(mask, values, np.nan)
    return FeatureTable(
        chemical_ids=ids or [f"C{i}" for i in range(n)],
        feature_names=[f"f{j}" for j in range(d)],
        feature_kinds=[FeatureKind.NUMERIC] * d,
        values=values,
        missing_mask=np.asarray(mask, dtype=bool),
    )


# ---------------------------------------------------------------------------
# CSV loading
# ---------------------------------------------------------------------------


def test_load_marks_empty_cell_missing(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("chemical_id,a:num,b:num\nC1,1.0,2.0\nC2,,3.0\nC3,4.0,5.0\n")
    t = load_feature_table(p)
    assert t.missing_mask.sum() == 5
    assert not t.missing_mask[1, 0]
    assert math.isnan(t.values[1, 0])
    assert t.values[1, 1] == 3.0


def test_load_duplicate_id_names_offender(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("chemical_id,a:num\nC1,1\nC1,2\n")
    with pytest.raises(IngestionError, match="C1"):
        load_feature_table(p)


def test_load_ragged_row_cites_line(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("chemical_id,a:num,b:num\nC1,1,2\nC2,3\n")
    with pytest.raises(IngestionError, match=":3"):
        load_feature_table(p)


def test_load_bad_numeric_token(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("chemical_id,a:num\nC1,abc\n")
    with pytest.raises(IngestionError, match="abc"):
        load_feature_table(p)


def test_load_categorical_tokens_coded_by_first_appearance(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("chemical_id,color:cat\nC1,red\nC2,blue\nC3,red\n")
    t = load_feature_table(p)
    np.testing.assert_array_equal(t.values[:, 0], [0.0, 1.0, 0.0])
    assert t.category_tokens["color"] == ["red", "blue"]


def test_save_load_round_trip(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text(
        "chemical_id,x:num,color:cat,y:num\n"
        "C1,1.5,red,\n"
        "C2,,green,2.25\n"
        "C3,-3.125,red,9.0\n"
    )
    t1 = load_feature_table(p)
    q = tmp_path / "g.csv"
    save_feature_table(t1, q)
    t2 = load_feature_table(q)
    assert t1.chemical_ids == t2.chemical_ids
    assert t1.feature_names == t2.feature_names
    assert t1.feature_kinds == t2.feature_kinds
    np.testing.assert_array_equal(t1.missing_mask, t2.missing_mask)
    np.testing.assert_array_equal(
        t1.values[t1.missing_mask], t2.values[t2.missing_mask]
    )
    assert t1.category_tokens == t2.category_tokens


def test_links_round_trip_and_dedupe(tmp_path):
    p = tmp_path / "l.csv"
    p.write_text("chemical_id,disease_id\nC1,D1\nC2,D1\nC1,D1\n")
    links = load_links(p)
    assert links.records == [("C1", "D1"), ("C2", "D1")]
    q = tmp_path / "m.csv"
    save_links(links, q)
    assert load_links(q).records == links.records


# ---------------------------------------------------------------------------
# Completeness filter
# ---------------------------------------------------------------------------


def test_filter_drops_below_threshold():
    # 100 columns: row with 69 observed dropped, 70 kept, full kept.
    mask = np.ones((3, 100), dtype=bool)
    mask[0, 69:] = False  # 69% observed
    mask[1, 70:] = False  # 70% observed
    t = numeric_table(np.zeros((3, 100)), mask=mask)
    out = filter_completeness(t, 0.70)
    assert out.chemical_ids == ["C1", "C2"]


def test_filter_fully_observed_unchanged():
    t = numeric_table(np.arange(6.0).reshape(2, 3))
    out = filter_completeness(t)
    assert out.chemical_ids == t.chemical_ids
    np.testing.assert_array_equal(out.values, t.values)


def test_filter_empty_result_warns():
    mask = np.zeros((2, 4), dtype=bool)
    t = numeric_table(np.zeros((2, 4)), mask=mask)
    with pytest.warns(EmptyResultWarning):
        out = filter_completeness(t, 0.5)
    assert out.n_drugs == 0


# ---------------------------------------------------------------------------
# Categorical enumeration
# ---------------------------------------------------------------------------


def test_enumerate_first_appearance_order():
    t = numeric_table(np.array([[10.0], [30.0], [10.0]]))
    t.feature_kinds = [FeatureKind.CATEGORICAL]
    out = enumerate_categoricals(t)
    np.testing.assert_array_equal(out.values[:, 0], [0.0, 1.0, 0.0])
    assert out.category_tokens["f0"] == ["10.0", "30.0"]


def test_enumerate_leaves_numeric_untouched():
    t = numeric_table(np.array([[10.0, 1.0], [30.0, 2.0]]))
    t.feature_kinds = [FeatureKind.CATEGORICAL, FeatureKind.NUMERIC]
    out = enumerate_categoricals(t)
    np.testing.assert_array_equal(out.values[:, 1], [1.0, 2.0])


def test_enumerate_decode_round_trip(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("chemical_id,c:cat\nC1,x\nC2,y\nC3,\nC4,x\n")
    t = enumerate_categoricals(load_feature_table(p))
    assert decode_categorical(t, "c") == ["x", "y", None, "x"]


# ---------------------------------------------------------------------------
# kNN imputation
# ---------------------------------------------------------------------------


def test_impute_no_missing_is_identity():
    t = numeric_table(np.arange(12.0).reshape(3, 4))
    out = knn_impute(t, k=2)
    np.testing.assert_array_equal(out.values, t.values)


def test_impute_hand_example():
    # rows [[1,2],[1,nan],[10,20]], k=1: row 0 is nearest on the shared
    # column, so the hole fills with 2.
    t = numeric_table(np.array([[1.0, 2.0], [1.0, np.nan], [10.0, 20.0]]))
    out = knn_impute(t, k=1)
    assert out.values[1, 1] == 2.0
    assert bool(out.missing_mask.all())


def test_impute_never_alters_observed(synth_default):
    table, _, _ = synth_default
    out = knn_impute(table, k=5)
    np.testing.assert_array_equal(
        out.values[table.missing_mask], table.values[table.missing_mask]
    )
    assert bool(out.missing_mask.all())


def test_impute_matches_brute_force_oracle():
    rng = RngStream(23, "imp").generator()
    values = rng.normal(size=(20, 5))
    mask = rng.random((20, 5)) >= 0.10
    t = numeric_table(values, mask=mask)
    out = knn_impute(t, k=5)
    expect = knn_impute_brute(np.where(mask, values, np.nan), mask,
                              [True] * 5, k=5)
    np.testing.assert_allclose(out.values, expect, rtol=0, atol=0)


def test_impute_tie_breaks_to_lower_index():
    # Rows 1 and 2 are equidistant from row 0; k=1 must take row 1.
    t = numeric_table(np.array([
        [0.0, np.nan],
        [1.0, 5.0],
        [-1.0, 9.0],
    ]))
    out = knn_impute(t, k=1)
    assert out.values[0, 1] == 5.0


def test_impute_unobserved_column_errors():
    t = numeric_table(np.array([[1.0, np.nan], [2.0, np.nan]]))
    with pytest.raises(ImputationError, match="f1"):
        knn_impute(t)


def test_impute_k_below_one_rejected():
    t = numeric_table(np.ones((2, 2)))
    with pytest.raises(ConfigError):
        knn_impute(t, k=0)


# ---------------------------------------------------------------------------
# z-score
# ---------------------------------------------------------------------------


def test_zscore_hand_value():
    t = numeric_table(np.array([[1.0], [2.0], [3.0]]))
    out, stats = zscore_normalize(t)
    expect = 1.0 / math.sqrt(2.0 / 3.0)
    np.testing.assert_allclose(out.values[:, 0], [-expect, 0.0, expect], atol=1e-15)
    assert abs(expect - 1.224744871391589) < 1e-12
    assert stats.means[0] == 2.0


def test_zscore_constant_column_zeroed():
    t = numeric_table(np.array([[5.0, 1.0], [5.0, 2.0], [5.0, 3.0]]))
    out, stats = zscore_normalize(t)
    np.testing.assert_array_equal(out.values[:, 0], [0.0, 0.0, 0.0])
    assert stats.stds[0] == 0.0


def test_zscore_output_standardized(synth_default):
    table, _, _ = synth_default
    full = knn_impute(table, k=5)
    out, _ = zscore_normalize(full)
    np.testing.assert_allclose(out.values.mean(axis=0), 0.0, atol=1e-9)
    np.testing.assert_allclose(out.values.std(axis=0), 1.0, atol=1e-9)


def test_zscore_inverse_round_trip():
    rng = RngStream(31, "zs").generator()
    vals = rng.normal(size=(10, 4)) * 3 + 1
    vals[:, 2] = 7.0  # constant column
    t = numeric_table(vals)
    out, stats = zscore_normalize(t)
    back = zscore_inverse(out.values, stats)
    np.testing.assert_allclose(back, vals, atol=1e-9)


def test_zscore_requires_fully_observed():
    t = numeric_table(np.array([[1.0], [np.nan]]))
    with pytest.raises(DataError):
        zscore_normalize(t)


def test_clean_chain_idempotent(synth_default):
    table, _, _ = synth_default
    once, _ = zscore_normalize(knn_impute(filter_completeness(table), k=5))
    twice, _ = zscore_normalize(knn_impute(filter_completeness(once), k=5))
    assert once.chemical_ids == twice.chemical_ids
    np.testing.assert_allclose(twice.values, once.values, atol=1e-12)


# ---------------------------------------------------------------------------
# unique drug view
# ---------------------------------------------------------------------------


def test_unique_view_dedupes_by_first_occurrence():
    t = numeric_table(np.array([[1.0], [2.0], [3.0]]), ids=["C1", "C2", "C1"])
    links = LinkTable([("C1", "D1"), ("C1", "D2"), ("C1", "D3"),
                       ("C1", "D4"), ("C1", "D5"), ("C2", "D1")])
    out = unique_drug_view(t, links)
    assert out.chemical_ids == ["C1", "C2"]
    assert out.values[0, 0] == 1.0
    # Every link still resolves against the view.
    ids = set(out.chemical_ids)
    assert all(c in ids for c, _ in links.records)


# ---------------------------------------------------------------------------
# Synthetic generator
# ---------------------------------------------------------------------------


def test_synthetic_shapes_and_determinism():
    t1, l1, y1 = generate_synthetic(SynthConfig())
    t2, l2, y2 = generate_synthetic(SynthConfig())
    assert t1.n_drugs == 200 and t1.n_features == 64
    assert len(y1) == 200
    np.testing.assert_array_equal(
        np.nan_to_num(t1.values), np.nan_to_num(t2.values)
    )
    assert l1.records == l2.records
    np.testing.assert_array_equal(y1, y2)


def test_synthetic_seed_changes_data():
    t1, _, _ = generate_synthetic(SynthConfig(seed=7))
    t2, _, _ = generate_synthetic(SynthConfig(seed=8))
    assert not np.array_equal(np.nan_to_num(t1.values), np.nan_to_num(t2.values))


def test_synthetic_no_cross_links_at_zero_density():
    cfg = SynthConfig(link_density_cross=0.0, missing_rate=0.0)
    _, links, labels = generate_synthetic(cfg)
    for cid, did in links.records:
        assert labels[int(cid[1:])] == int(did[1:]) // cfg.diseases_per_cluster


def test_synthetic_tiny_noise_perfect_silhouette():
    from _oracles import silhouette_brute

    cfg = SynthConfig(n_clusters=3, drugs_per_cluster=10, feature_dim=8,
                      noise_sigma=1e-6, missing_rate=0.0, seed=3)
    table, _, labels = generate_synthetic(cfg)
    assert silhouette_brute(table.values, labels) > 0.999


def test_synthetic_kmeans_recovers_planted_clusters(synth_default):
    from sklearn.cluster import KMeans
    from sklearn.metrics import adjusted_rand_score

    table, _, labels = synth_default
    full = knn_impute(table, k=5)
    pred = KMeans(n_clusters=5, n_init=10, random_state=0).fit_predict(full.values)
    assert adjusted_rand_score(labels, pred) >= 0.99


def test_synthetic_infeasible_separation_errors():
    cfg = SynthConfig(n_clusters=8, feature_dim=2, noise_sigma=10.0)
    with pytest.raises(DataError):
        generate_synthetic(cfg)


def test_synthetic_missing_rate_applied():
    table, _, _ = generate_synthetic(SynthConfig())
    frac = 1.0 - table.missing_mask.mean()
    assert abs(frac - 0.1) < 0.02


def test_synth_config_validation():
    with pytest.raises(ConfigError):
        SynthConfig(link_density_within=0.1, link_density_cross=0.2).validate()
    with pytest.raises(ConfigError):
        SynthConfig(missing_rate=1.0).validate()
