import json
import os

import numpy as np
import pytest

from dgn.blocks import ClassifierModel
from dgn.experiments import (
    ACCEPTANCE_BANDS,
    FAMILY_LABELS,
    MODEL_ROWS,
    ExperimentSpec,
    audit_equivariance,
    build_augmented_train_set,
    build_test_set,
    build_train_set,
    expected_audit_matrix,
    family_by_label,
    run_efficiency_sweep,
    run_table1,
)
from dgn.geometry import POLYTOPE_COUNTS, make_polytope
from dgn.training import load_records_csv


def test_train_set_shape():
    train = build_train_set()
    assert len(train) == 5
    assert sum(len(g.coords) for g in train) == 50
    assert [g.label for g in train] == [0, 1, 2, 3, 4]


def test_test_set_counts_and_balance():
    test = build_test_set(family_by_label("orthogonal"), 3, per_class=100)
    assert len(test) == 500
    labels = np.array([g.label for g in test])
    assert np.array_equal(np.bincount(labels), np.full(5, 100))


def test_orthogonal_test_graphs_preserve_edge_lengths():
    test = build_test_set(family_by_label("orthogonal"), 3, per_class=5)
    for g in test:
        canonical = make_polytope(g.kind)
        ref = np.sort(
            np.linalg.norm(
                canonical.vertices[canonical.edges[:, 0]] - canonical.vertices[canonical.edges[:, 1]],
                axis=1,
            )
        )
        got = np.sort(np.linalg.norm(g.coords[g.edges[:, 0]] - g.coords[g.edges[:, 1]], axis=1))
        assert np.abs(got - ref).max() <= 1e-10


def test_dilation_test_graphs_scale_edge_lengths_uniformly():
    test = build_test_set(family_by_label("orthogonal_dilation"), 3, per_class=5)
    for g in test:
        canonical = make_polytope(g.kind)
        ref = np.linalg.norm(
            canonical.vertices[canonical.edges[:, 0]] - canonical.vertices[canonical.edges[:, 1]],
            axis=1,
        )
        got = np.linalg.norm(g.coords[g.edges[:, 0]] - g.coords[g.edges[:, 1]], axis=1)
        ratios = got / ref
        assert np.abs(ratios - ratios[0]).max() <= 1e-10


def test_augmented_train_set_sizes():
    tclass = family_by_label("orthogonal")
    aug = build_augmented_train_set(tclass, 3, 5)
    assert len(aug) == 5 + 15
    labels = np.array([g.label for g in aug])
    assert np.array_equal(np.bincount(labels), np.full(5, 4))


def test_test_sets_shared_across_rows_given_base_seed():
    a = build_test_set(family_by_label("orthogonal"), np.random.default_rng(99), per_class=3)
    b = build_test_set(family_by_label("orthogonal"), np.random.default_rng(99), per_class=3)
    for ga, gb in zip(a, b):
        assert np.array_equal(ga.coords, gb.coords)


def test_spec_id_is_stable_and_sensitive():
    spec = ExperimentSpec("sdgn", "identity", "orthogonal", 0.0)
    assert spec.spec_id() == ExperimentSpec("sdgn", "identity", "orthogonal", 0.0).spec_id()
    other = ExperimentSpec("dgn", "identity", "orthogonal", 0.0)
    assert spec.spec_id() != other.spec_id()


def test_acceptance_bands_cover_the_grid_rows():
    row_labels = {r for r, _, _ in MODEL_ROWS}
    for (row, family), band in ACCEPTANCE_BANDS.items():
        assert row in row_labels
        assert family in FAMILY_LABELS
        assert 0.0 <= band[0] <= band[1] <= 1.0


def test_run_table1_artifacts(tmp_path):
    out = str(tmp_path / "grid")
    grid = run_table1(out, seeds=2, epochs=3, per_class=2, jobs=1)
    assert len(grid) == 25
    for (row, family), summary in grid.items():
        cell_dir = os.path.join(out, summary["spec_id"])
        files = sorted(os.listdir(cell_dir))
        assert files == ["run-0.csv", "run-0.json", "run-1.csv", "run-1.json", "summary.json"]
        cols = load_records_csv(os.path.join(cell_dir, "run-0.csv"))
        assert len(cols["epoch"]) == 3
        assert len(summary["curves"]["test_acc"]["mean"]) == 3
        with open(os.path.join(cell_dir, "summary.json")) as fh:
            on_disk = json.load(fh)
        assert on_disk["final_test_acc"]["mean"] == summary["final_test_acc"]["mean"]
        assert on_disk["spec"]["family"] == family
    assert os.path.exists(os.path.join(out, "table1.csv"))


def test_run_table1_reruns_are_byte_identical(tmp_path):
    out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
    run_table1(out1, seeds=1, epochs=2, per_class=2, jobs=1,
               rows=MODEL_ROWS[:1], family_labels=FAMILY_LABELS[:1])
    run_table1(out2, seeds=1, epochs=2, per_class=2, jobs=1,
               rows=MODEL_ROWS[:1], family_labels=FAMILY_LABELS[:1])
    csvs1 = sorted(
        os.path.join(r, f) for r, _, fs in os.walk(out1) for f in fs if f.endswith(".csv")
    )
    for path in csvs1:
        twin = path.replace(out1, out2)
        assert open(path, "rb").read() == open(twin, "rb").read()


def test_parallel_and_serial_runs_agree(tmp_path):
    kwargs = dict(seeds=2, epochs=2, per_class=2, rows=MODEL_ROWS[2:3],
                  family_labels=FAMILY_LABELS[:2])
    serial = run_table1(str(tmp_path / "s"), jobs=1, **kwargs)
    parallel = run_table1(str(tmp_path / "p"), jobs=2, **kwargs)
    for key in serial:
        assert serial[key]["final_test_acc"]["per_seed"] == parallel[key]["final_test_acc"]["per_seed"]


def test_sweep_artifacts_and_zero_copies_degenerate(tmp_path):
    out = str(tmp_path / "sweep")
    points = run_efficiency_sweep(out, copies=(0, 2), seeds=1, epochs=3, per_class=2, jobs=1)
    assert [p["copies"] for p in points] == [0, 2]
    sweep_csv = open(os.path.join(out, "sweep.csv")).read().splitlines()
    assert sweep_csv[0] == "copies,mean_acc,std_acc"
    assert len(sweep_csv) == 3

    # copies=0 equals a plain table cell run with the same seeds
    grid = run_table1(str(tmp_path / "cell"), seeds=1, epochs=3, per_class=2, jobs=1,
                      rows=MODEL_ROWS[4:5], family_labels=("orthogonal",))
    cell = grid[("gn", "orthogonal")]["final_test_acc"]["per_seed"]
    assert points[0]["per_seed"] == cell


def test_summary_statistics_recomputable_from_csvs(tmp_path):
    out = str(tmp_path / "grid")
    grid = run_table1(out, seeds=3, epochs=4, per_class=2, jobs=1,
                      rows=MODEL_ROWS[2:3], family_labels=("orthogonal",))
    summary = grid[("dgn_identity", "orthogonal")]
    cell_dir = os.path.join(out, summary["spec_id"])
    finals = []
    for seed in range(3):
        cols = load_records_csv(os.path.join(cell_dir, f"run-{seed}.csv"))
        finals.append(cols["test_acc"][-1])
    assert np.mean(finals) == summary["final_test_acc"]["mean"]
    assert np.std(finals) == summary["final_test_acc"]["std"]


def test_audit_matrix_matches_architecture_expectations():
    for kind, cmap in (("sdgn", "identity"), ("dgn", "identity"), ("gn", None)):
        model = ClassifierModel(kind=kind, coordinate_map=cmap, seed=1)
        report = audit_equivariance(model, n_transforms=10)
        expected = expected_audit_matrix(kind)
        got = {fam: entry["pass"] for fam, entry in report["families"].items()}
        assert got == expected, f"{kind}: {got} != {expected}"


def test_audit_report_carries_defect_fields():
    model = ClassifierModel(kind="sdgn", coordinate_map="weighted_displacement", seed=2)
    report = audit_equivariance(model, n_transforms=5)
    entry = report["families"]["orthogonal"]
    assert entry["coord_defect"] is not None
    assert entry["post_distance_defect"] is not None
    assert entry["scaling_defect"] is not None
    assert report["config_id"] == model.config_id()
