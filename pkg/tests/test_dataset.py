"""Tests for dataset ingestion, imputation, summaries and subsetting."""

from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from protlab.dataset import (
    AllColumnsDropped,
    DimensionMismatch,
    DuplicateIdentifier,
    InsufficientNeighbors,
    InvalidDataset,
    MissingFile,
    NonNumericCell,
    UnknownCellType,
    UnknownField,
    filter_and_impute,
    load_clinical,
    load_dataset,
    load_single_cell,
    save_dataset,
    structured_summary,
    subset_by_cell_type,
)
from protlab.dataset.synthetic import SPARSE_PROTEIN


def _write_pair(directory: Path, expr: str, meta: str) -> tuple[Path, Path]:
    directory.mkdir(parents=True, exist_ok=True)
    expr_path = directory / "expression.csv"
    meta_path = directory / "metadata.csv"
    expr_path.write_text(expr, encoding="utf-8")
    meta_path.write_text(meta, encoding="utf-8")
    return expr_path, meta_path


def test_toy_pbmc_shape(pbmc) -> None:
    assert pbmc.matrix.shape == (300, 10)
    assert pbmc.kind == "single_cell"
    assert sorted(set(pbmc.samples())) == ["S1", "S2", "S3", "S4", "S5", "S6"]
    assert len(pbmc.clusterings) == 0


def test_toy_pbmc_summary_lists_condition_levels(pbmc) -> None:
    summary = structured_summary(pbmc)
    assert summary.counts == {"n_observations": 300, "n_proteins": 10}
    condition = summary.field("condition")
    assert condition is not None
    assert condition.type == "categorical"
    assert condition.examples == ("Disease", "Healthy")
    assert summary.field("age").type == "numeric"
    assert summary.narrative == ""
    assert "condition" in summary.to_text()


def test_summary_truncates_examples(tmp_path: Path) -> None:
    ids = [f"c{i}" for i in range(12)]
    expr = "id,A\n" + "\n".join(f"{i},1.0" for i in ids)
    meta = "id,sample_id,donor\n" + "\n".join(f"{i},S1,D{n:02d}" for n, i in enumerate(ids))
    dataset = load_single_cell(*_write_pair(tmp_path, expr, meta))
    donor = structured_summary(dataset).field("donor")
    assert donor.n_distinct == 12
    assert len(donor.examples) == 8
    assert donor.truncated


def test_sample_field_is_optional(tmp_path: Path) -> None:
    expr = "cell_id,CD3,CD19\nc1,1.0,0.0\nc2,0.0,2.0\n"
    dataset = load_single_cell(*_write_pair(tmp_path, expr, "cell_id,condition\nc1,Healthy\nc2,Disease\n"))
    assert dataset.sample_field is None
    assert structured_summary(dataset).field("condition").examples == ("Disease", "Healthy")
    with pytest.raises(UnknownField):
        dataset.samples()


def test_key_only_metadata_gives_empty_catalog(tmp_path: Path) -> None:
    expr = "cell_id,CD3,CD19\nc1,1.0,0.0\nc2,0.0,2.0\n"
    dataset = load_single_cell(*_write_pair(tmp_path, expr, "cell_id\nc1\nc2\n"))
    summary = structured_summary(dataset)
    assert summary.field_catalog == ()
    assert "Metadata fields: none" in summary.to_text()

    save_dataset(dataset, tmp_path / "saved")
    assert load_dataset(tmp_path / "saved").sample_field is None


def test_sample_field_can_be_named(tmp_path: Path) -> None:
    expr = "id,A\nc1,1.0\nc2,2.0\nc3,3.0\n"
    meta = "id,patient,condition\nc1,P1,X\nc2,P1,X\nc3,P2,Y\n"
    paths = _write_pair(tmp_path, expr, meta)
    dataset = load_single_cell(*paths, sample_field="patient")
    assert dataset.samples().tolist() == ["P1", "P1", "P2"]
    with pytest.raises(UnknownField):
        load_single_cell(*paths, sample_field="sample_id")


def test_subset_by_cell_type_keeps_t_cells(pbmc_typed) -> None:
    t_cells = subset_by_cell_type(pbmc_typed, "truth", "T Cells")
    assert t_cells.n_cells == 120
    assert set(t_cells.cell_types["truth"].values()) == {"T Cells"}
    assert t_cells.labels("truth").tolist() == [0] * 120
    # parent untouched
    assert pbmc_typed.n_cells == 300


def test_subset_summary_counts_matching_cells(pbmc_typed) -> None:
    expected = int((pbmc_typed.cell_type_labels("truth") == "B Cells").sum())
    summary = structured_summary(subset_by_cell_type(pbmc_typed, "truth", "B Cells"))
    assert summary.counts == {"n_observations": expected, "n_proteins": 10}
    assert summary.cell_type_maps["truth"] == ("B Cells",)


def test_subset_unknown_cell_type(pbmc_typed) -> None:
    with pytest.raises(UnknownCellType):
        subset_by_cell_type(pbmc_typed, "truth", "Platelets")


def test_arcsinh_transform(tmp_path: Path) -> None:
    expr = "id,A,B\nc1,5.0,0.0\nc2,10.0,50.0\n"
    meta = "id,sample_id\nc1,S1\nc2,S1\n"
    dataset = load_single_cell(*_write_pair(tmp_path, expr, meta), arcsinh=True)
    assert dataset.matrix.values[0, 0] == pytest.approx(np.arcsinh(1.0))
    assert dataset.matrix.values[1, 1] == pytest.approx(np.arcsinh(10.0))


def test_non_numeric_cell_reports_location(tmp_path: Path) -> None:
    expr = "id,A,B\nc1,1.0,abc\nc2,2.0,3.0\n"
    meta = "id,sample_id\nc1,S1\nc2,S1\n"
    with pytest.raises(NonNumericCell) as excinfo:
        load_single_cell(*_write_pair(tmp_path, expr, meta))
    assert "c1" in str(excinfo.value)
    assert "B" in str(excinfo.value)


def test_metadata_must_cover_rows(tmp_path: Path) -> None:
    expr = "id,A\nc1,1.0\nc2,2.0\n"
    meta = "id,sample_id\nc1,S1\n"
    with pytest.raises(DimensionMismatch):
        load_single_cell(*_write_pair(tmp_path, expr, meta))


def test_duplicate_ids(tmp_path: Path) -> None:
    expr = "id,A\nc1,1.0\nc1,2.0\n"
    meta = "id,sample_id\nc1,S1\n"
    with pytest.raises(DuplicateIdentifier):
        load_single_cell(*_write_pair(tmp_path, expr, meta))


def test_missing_file(tmp_path: Path) -> None:
    with pytest.raises(MissingFile):
        load_single_cell(tmp_path / "nope.csv", tmp_path / "meta.csv")


def test_toy_cohort_drops_sparse_protein(cohort) -> None:
    assert cohort.n_samples == 40
    assert SPARSE_PROTEIN not in cohort.proteins
    assert cohort.dropped_proteins == (SPARSE_PROTEIN,)
    assert len(cohort.proteins) == 49
    assert cohort.imputed_count == 6
    assert np.isfinite(cohort.matrix.values).all()
    assert cohort.survival_time_field == "os_time"


def test_quarter_missing_is_kept() -> None:
    values = np.arange(40.0).reshape(8, 5)
    values[:2, 0] = np.nan  # exactly 25%
    values[:3, 1] = np.nan  # 37.5%
    imputed, kept, dropped, n_imputed = filter_and_impute(
        values, [f"s{i}" for i in range(8)], ["a", "b", "c", "d", "e"], knn_k=2
    )
    assert kept == ["a", "c", "d", "e"]
    assert dropped == ["b"]
    assert n_imputed == 2
    # observed cells pass through untouched
    assert imputed[2:, 0].tolist() == values[2:, 0].tolist()


def test_imputation_averages_nearest_donors() -> None:
    values = np.array(
        [
            [1.0, np.nan],
            [1.1, 10.0],
            [0.9, 20.0],
            [9.0, 100.0],
            [9.5, 200.0],
        ]
    )
    imputed, _, _, _ = filter_and_impute(values, list("abcde"), ["x", "y"], knn_k=2)
    assert imputed[0, 1] == pytest.approx(15.0)


def test_imputed_values_stay_within_observed_range() -> None:
    rng = np.random.default_rng(8)
    for _ in range(20):
        values = rng.normal(size=(30, 6)) * rng.uniform(0.5, 5.0, size=6)
        holes = rng.random(values.shape) < 0.1
        observed = values.copy()
        observed[holes] = np.nan
        imputed, kept, _, _ = filter_and_impute(observed, [f"s{i}" for i in range(30)], list("abcdef"), knn_k=3)
        for j, col in enumerate(kept):
            source = observed[:, "abcdef".index(col)]
            assert imputed[:, j].min() >= np.nanmin(source)
            assert imputed[:, j].max() <= np.nanmax(source)


def test_all_columns_dropped() -> None:
    values = np.full((4, 2), np.nan)
    with pytest.raises(AllColumnsDropped):
        filter_and_impute(values, list("abcd"), ["x", "y"], knn_k=1)


def test_insufficient_neighbors() -> None:
    values = np.array([[1.0, np.nan], [2.0, 3.0], [3.0, 4.0], [4.0, 5.0]])
    with pytest.raises(InsufficientNeighbors):
        filter_and_impute(values, list("abcd"), ["x", "y"], knn_k=5)


def test_clinical_missing_tokens(tmp_path: Path) -> None:
    rows = ["id,A,B"] + [f"s{i},{i}.0,{2 * i}.0" for i in range(8)]
    rows[1] = "s0,NA,0.0"
    meta = "id,time,event\n" + "\n".join(f"s{i},{10 + i},{i % 2}" for i in range(8))
    cohort = load_clinical(
        *_write_pair(tmp_path, "\n".join(rows) + "\n", meta), knn_k=3, survival_time_field="time", event_field="event"
    )
    assert cohort.imputed_count == 1
    assert cohort.matrix.values[0, 0] == pytest.approx(2.0)


@pytest.mark.parametrize(
    "field, bad",
    [("event", {0: "Dead", 1: "Alive"}), ("event", {0: "2", 1: "1"}), ("time", {0: "ten", 1: "11"}), ("time", {0: "-1", 1: "11"})],
)
def test_survival_fields_must_be_numeric_codes(tmp_path: Path, field: str, bad: dict) -> None:
    expr = "id,A\n" + "".join(f"s{i},{i}.0\n" for i in range(4))
    times = {i: str(10 + i) for i in range(4)}
    events = {i: str(i % 2) for i in range(4)}
    (events if field == "event" else times).update(bad)
    meta = "id,time,event\n" + "".join(f"s{i},{times[i]},{events[i]}\n" for i in range(4))
    with pytest.raises(InvalidDataset):
        load_clinical(*_write_pair(tmp_path, expr, meta), survival_time_field="time", event_field="event")


def test_save_and_reload_keeps_clusterings(pbmc_typed, tmp_path: Path) -> None:
    save_dataset(pbmc_typed, tmp_path / "saved")
    reloaded = load_dataset(tmp_path / "saved")
    assert reloaded.kind == "single_cell"
    np.testing.assert_array_equal(reloaded.matrix.values, pbmc_typed.matrix.values)
    np.testing.assert_array_equal(reloaded.labels("truth"), pbmc_typed.labels("truth"))
    assert dict(reloaded.cell_types["truth"]) == dict(pbmc_typed.cell_types["truth"])
    assert dict(reloaded.meta.types) == dict(pbmc_typed.meta.types)


def test_save_cohort_keeps_survival_fields(cohort, tmp_path: Path) -> None:
    save_dataset(cohort, tmp_path / "cohort")
    reloaded = load_dataset(tmp_path / "cohort")
    assert reloaded.kind == "clinical"
    assert reloaded.event_field == "os_event"
    assert reloaded.dropped_proteins == cohort.dropped_proteins
    pd.testing.assert_frame_equal(reloaded.matrix.to_frame(), cohort.matrix.to_frame())
