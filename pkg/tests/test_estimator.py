import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from dgn.estimator import DGNClassifier
from dgn.experiments import build_test_set, build_train_set, family_by_label
from dgn.geometry import make_polytope
from dgn.validation import check_graph, check_graph_list, check_labels


def _xy(graphs):
    return [(g.coords, g.edges) for g in graphs], np.array([g.label for g in graphs])


def test_get_params_roundtrip_and_clone():
    clf = DGNClassifier(block="dgn", epochs=7, random_state=3)
    params = clf.get_params()
    assert params["block"] == "dgn" and params["epochs"] == 7
    twin = clone(clf)
    assert twin.get_params() == params


def test_fit_predict_separates_polytopes():
    X, y = _xy(build_train_set())
    clf = DGNClassifier(block="sdgn", epochs=120, random_state=0)
    assert clf.fit(X, y) is clf
    assert np.array_equal(clf.predict(X), y)
    assert clf.score(X, y) == 1.0


def test_predict_proba_rows_sum_to_one():
    X, y = _xy(build_train_set())
    clf = DGNClassifier(epochs=30, random_state=0).fit(X, y)
    proba = clf.predict_proba(X)
    assert proba.shape == (5, 5)
    assert np.allclose(proba.sum(axis=1), 1.0)
    assert np.all(proba >= 0)


def test_estimator_accepts_objects_with_coords_and_edges():
    graphs = build_train_set()
    y = np.array([g.label for g in graphs])
    clf = DGNClassifier(epochs=20, random_state=0).fit(graphs, y)
    assert clf.predict(graphs).shape == (5,)


def test_classes_follow_input_labels():
    graphs = build_train_set()[:3]
    X = [(g.coords, g.edges) for g in graphs]
    y = np.array([4, 7, 9])
    clf = DGNClassifier(epochs=60, random_state=1).fit(X, y)
    assert np.array_equal(clf.classes_, [4, 7, 9])
    assert set(clf.predict(X)) <= {4, 7, 9}


def test_unfitted_predict_raises():
    with pytest.raises(NotFittedError):
        DGNClassifier().predict([(np.zeros((2, 3)), np.array([[0, 1]]))])


def test_eval_set_records_test_accuracy():
    X, y = _xy(build_train_set())
    test = build_test_set(family_by_label("orthogonal"), 11, per_class=4)
    Xt, yt = _xy(test)
    clf = DGNClassifier(epochs=25, random_state=0).fit(X, y, eval_set=(Xt, yt))
    assert len(clf.record_.test_acc["test"]) == 25


def test_gn_block_requires_no_coordinate_map():
    X, y = _xy(build_train_set())
    clf = DGNClassifier(block="gn", coordinate_map="none", epochs=5).fit(X, y)
    assert clf.model_.coordinate_map is None
    with pytest.raises(ValueError):
        DGNClassifier(block="gn", coordinate_map="identity", epochs=5).fit(X, y)


def test_validation_rejects_malformed_graphs():
    with pytest.raises(ValueError):
        check_graph((np.zeros((0, 3)), np.array([[0, 1]])))
    with pytest.raises(ValueError):
        check_graph((np.zeros((3, 3)), np.array([[0, 5]])))
    with pytest.raises(ValueError):
        check_graph((np.full((3, 3), np.nan), np.array([[0, 1]])))
    with pytest.raises(ValueError):
        check_graph((np.zeros((3, 3)), np.zeros((0, 2), dtype=int)))
    with pytest.raises(ValueError):
        check_graph(42)


def test_validation_rejects_mixed_dimensions():
    p = make_polytope("cube")
    with pytest.raises(ValueError):
        check_graph_list([(p.vertices, p.edges), (p.vertices[:, :2], p.edges)])
    with pytest.raises(ValueError):
        check_graph_list([])


def test_validation_rejects_bad_labels():
    with pytest.raises(ValueError):
        check_labels([0, 1], 3)
    with pytest.raises(ValueError):
        check_labels([0.5, 1.0], 2)
    assert check_labels([1.0, 2.0], 2).dtype == np.int64
