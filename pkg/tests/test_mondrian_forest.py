"""Tests for the online Mondrian forest"""

import json

import numpy as np
import pytest

from errors import DomainError, NotTrainedError, SchemaError
from mondrian_forest import (FeatureSchema, FeatureVector, MondrianForest, Task, feature_importance, forest_predict,
                             forest_update, load_forest, save_forest)


@pytest.fixture
def schema():
    return FeatureSchema(("signal", "noise"), (("kind", 3),), (1.0, 1.0))


def point(rng):
    signal = rng.uniform(-3, 3)
    return FeatureVector((signal, rng.uniform(-3, 3)), (int(rng.integers(3)),)), ("L" if signal < 0 else "R")


def trained_classifier(schema, n=200, seed=0, trees=10):
    rng = np.random.default_rng(seed)
    forest = MondrianForest(schema, n_trees=trees, seed=seed)
    for _ in range(n):
        x, y = point(rng)
        forest.update(x, y)
    return forest


class TestFeatureSchema:

    def test_onehot_encoding(self, schema):
        encoded = schema.encode(FeatureVector((0.5, -1.0), (2,)))
        assert encoded.tolist() == [0.5, -1.0, 0.0, 0.0, 1.0]
        assert schema.dims == 5

    def test_scales_divide(self):
        scaled = FeatureSchema(("slot",), (), (47.0,))
        assert scaled.encode(FeatureVector((47.0,))).tolist() == [1.0]

    def test_bad_vectors(self, schema):
        with pytest.raises(SchemaError):
            schema.encode(FeatureVector((0.0, 0.0), (3,)))
        with pytest.raises(SchemaError):
            schema.encode(FeatureVector((float("nan"), 0.0), (0,)))
        with pytest.raises(SchemaError):
            schema.encode(FeatureVector((0.0,), (0,)))

    def test_named_vector(self, schema):
        assert schema.vector({"signal": 1, "noise": 2}, {"kind": 1}) == FeatureVector((1.0, 2.0), (1,))
        with pytest.raises(SchemaError):
            schema.vector({"signal": 1}, {"kind": 1})

    def test_duplicate_names(self):
        with pytest.raises(SchemaError):
            FeatureSchema(("a",), (("a", 2),))


class TestClassification:

    def test_untrained(self, schema):
        with pytest.raises(NotTrainedError):
            MondrianForest(schema).predict_proba(FeatureVector((0.0, 0.0), (0,)))

    def test_single_label(self, schema):
        forest = MondrianForest(schema, n_trees=3)
        forest.update(FeatureVector((1.0, 1.0), (0,)), "B")
        assert forest.predict_proba(FeatureVector((-2.0, 0.0), (1,))) == {"B": pytest.approx(1.0)}

    def test_learns_separable_classes(self, schema):
        forest = trained_classifier(schema)
        left = forest.predict_proba(FeatureVector((-2.5, 0.0), (0,)))
        right = forest.predict_proba(FeatureVector((2.5, 0.0), (1,)))
        assert left["L"] > 0.8 and right["R"] > 0.8
        assert sum(left.values()) == pytest.approx(1.0)
        assert forest.predict(FeatureVector((-2.5, 1.0), (2,))) == "L"

    def test_new_label_extends_distribution(self, schema):
        forest = trained_classifier(schema, n=30)
        forest_update(forest, FeatureVector((0.0, 0.0), (0,)), "M")
        probs = forest.predict_proba(FeatureVector((0.0, 0.0), (0,)))
        assert set(probs) == {"L", "R", "M"}
        assert sum(probs.values()) == pytest.approx(1.0)

    def test_signal_dominates_importance(self, schema):
        importance = feature_importance(trained_classifier(schema, n=300))
        assert sum(importance.values()) == pytest.approx(1.0)
        assert importance["signal"] > importance["noise"]
        assert importance["signal"] > importance["kind"]

    def test_blob_accuracy_stable_across_orders(self):
        rng = np.random.default_rng(12)
        centres = {"L": (-2.0, -2.0), "R": (2.0, 2.0)}
        labels = [str(y) for y in rng.choice(["L", "R"], 400)]
        points = [FeatureVector(tuple(float(v) for v in rng.normal(centres[y], 0.6))) for y in labels]
        train, test = list(zip(points, labels))[:300], list(zip(points, labels))[300:]
        accuracies = []
        for order in range(10):
            forest = MondrianForest(FeatureSchema(("x", "y")), n_trees=10, seed=order)
            for i in np.random.default_rng(order).permutation(len(train)):
                forest.update(*train[i])
            accuracies.append(np.mean([forest.predict(x) == y for x, y in test]))
        assert min(accuracies) >= 0.95
        assert max(accuracies) - min(accuracies) <= 0.03

    def test_non_string_label(self, schema):
        with pytest.raises(SchemaError):
            MondrianForest(schema).update(FeatureVector((0.0, 0.0), (0,)), 3)


class TestRegression:

    def test_identical_points_average(self):
        schema = FeatureSchema(("slot",))
        forest = MondrianForest(schema, Task.REGRESSION, n_trees=5)
        forest.update_many([FeatureVector((16.0,)), FeatureVector((16.0,))], [100.0, 110.0])
        mean, variance = forest.predict_regression(FeatureVector((16.0,)))
        assert mean == pytest.approx(105.0)
        assert variance == pytest.approx(25.0)
        assert forest_predict(forest, FeatureVector((16.0,)))[0] == pytest.approx(105.0)

    def test_step_function(self):
        schema = FeatureSchema(("x",))
        forest = MondrianForest(schema, Task.REGRESSION, n_trees=10, seed=2)
        rng = np.random.default_rng(2)
        for _ in range(200):
            x = rng.uniform(0, 10)
            forest.update(FeatureVector((x,)), 100.0 if x < 5 else 60.0)
        assert forest.predict(FeatureVector((1.0,))) == pytest.approx(100.0, abs=8)
        assert forest.predict(FeatureVector((9.0,))) == pytest.approx(60.0, abs=8)

    def test_task_mismatch(self):
        forest = MondrianForest(FeatureSchema(("x",)), Task.REGRESSION)
        forest.update(FeatureVector((1.0,)), 80.0)
        with pytest.raises(DomainError):
            forest.predict_proba(FeatureVector((1.0,)))
        with pytest.raises(DomainError):
            forest.update(FeatureVector((1.0,)), float("inf"))

    def test_bad_construction(self):
        with pytest.raises(DomainError):
            MondrianForest(FeatureSchema(("x",)), n_trees=0)
        with pytest.raises(DomainError):
            MondrianForest(FeatureSchema(("x",))).update_many([FeatureVector((1.0,))], [])


class TestPersistence:

    def test_deterministic_for_seed(self, schema):
        query = FeatureVector((0.3, -0.2), (1,))
        assert trained_classifier(schema, seed=5).predict_proba(query) == \
            trained_classifier(schema, seed=5).predict_proba(query)

    def test_saved_forest_continues_training(self, tmp_path, schema):
        rng = np.random.default_rng(9)
        stream = [point(rng) for _ in range(80)]
        live = MondrianForest(schema, n_trees=4, seed=9)
        live.update_many(*zip(*stream[:40]))
        path = tmp_path / "forest.json"
        save_forest(live, path, {"config_hash": "abc123abc123", "seed": 9})
        restored = load_forest(path)
        for x, y in stream[40:]:
            live.update(x, y)
            restored.update(x, y)
        query = FeatureVector((0.1, 0.1), (0,))
        assert restored.predict_proba(query) == pytest.approx(live.predict_proba(query))
        assert json.loads(path.read_text())["config_hash"] == "abc123abc123"

    def test_load_rejects_garbage(self, tmp_path):
        path = tmp_path / "forest.json"
        path.write_text("{not json")
        with pytest.raises(SchemaError):
            load_forest(path)
        path.write_text(json.dumps({"format": "something-else"}))
        with pytest.raises(SchemaError):
            load_forest(path)
