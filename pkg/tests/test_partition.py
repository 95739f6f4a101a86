import numpy as np
import pytest

from biotune import ConfigurationError, build_partition, fold_for_generation
from biotune.partition import class_counts_per_fold, load_labels_file


def check_plan_properties(plan, labels):
    """Brute-force oracle: disjointness, exhaustiveness, per-class balance <= 1."""
    seen = [sid for fold in plan.folds for sid in fold]
    assert len(seen) == len(set(seen)), "folds overlap"
    assert sorted(seen) == sorted(labels), "folds lose or invent samples"
    counts = class_counts_per_fold(plan)
    for cls in set(labels.values()):
        per_fold = [c.get(cls, 0) for c in counts]
        assert max(per_fold) - min(per_fold) <= 1, f"class {cls} unbalanced: {per_fold}"


class TestBuildPartition:
    def test_two_balanced_classes_split_evenly(self):
        labels = {f"a{i}": "A" for i in range(5)} | {f"b{i}": "B" for i in range(5)}
        plan = build_partition(labels, 2, seed=3)
        check_plan_properties(plan, labels)
        assert sorted(len(f) for f in plan.folds) == [5, 5]

    def test_single_fold_holds_everything(self):
        labels = {f"s{i}": i % 3 for i in range(11)}
        plan = build_partition(labels, 1, seed=0)
        assert plan.fold_count == 1
        assert sorted(plan.folds[0]) == sorted(labels)

    def test_seven_samples_three_folds_pigeonhole(self):
        labels = {f"s{i}": "only" for i in range(7)}
        plan = build_partition(labels, 3, seed=9)
        check_plan_properties(plan, labels)
        assert sorted(len(f) for f in plan.folds) == [2, 2, 3]

    def test_more_folds_than_smallest_class_still_valid(self, caplog):
        labels = {"x0": "rare"} | {f"y{i}": "common" for i in range(9)}
        with caplog.at_level("WARNING"):
            plan = build_partition(labels, 4, seed=1)
        check_plan_properties(plan, labels)
        assert any("smallest class" in r.message for r in caplog.records)

    def test_deterministic_for_same_inputs(self):
        labels = {f"s{i}": i % 4 for i in range(37)}
        a = build_partition(labels, 5, seed=123)
        b = build_partition(labels, 5, seed=123)
        assert a.folds == b.folds

    def test_seed_changes_assignment(self):
        labels = {f"s{i}": i % 2 for i in range(40)}
        a = build_partition(labels, 4, seed=1)
        b = build_partition(labels, 4, seed=2)
        assert a.folds != b.folds

    def test_insertion_order_does_not_matter(self):
        labels = {f"s{i}": i % 3 for i in range(20)}
        shuffled = dict(sorted(labels.items(), key=lambda kv: hash(kv[0])))
        assert build_partition(labels, 3, seed=7).folds == build_partition(shuffled, 3, seed=7).folds

    def test_rejects_bad_inputs(self):
        with pytest.raises(ConfigurationError):
            build_partition({}, 2, seed=0)
        with pytest.raises(ConfigurationError):
            build_partition({"a": 1}, 0, seed=0)

    def test_randomized_property_sweep(self):
        rng = np.random.default_rng(2024)
        for _ in range(25):
            n_classes = int(rng.integers(1, 8))
            n_samples = int(rng.integers(1, 400))
            fold_count = int(rng.integers(1, 9))
            labels = {
                f"s{i}": f"c{rng.integers(0, n_classes)}" for i in range(n_samples)
            }
            plan = build_partition(labels, fold_count, seed=int(rng.integers(0, 10**6)))
            check_plan_properties(plan, labels)


class TestFoldForGeneration:
    def test_spec_examples(self):
        assert fold_for_generation(5, 3) == 2
        assert fold_for_generation(0, 4) == 0
        assert fold_for_generation(9, 3) == 0

    def test_periodicity(self):
        for fold_count in (1, 2, 3, 7):
            for g in range(30):
                assert fold_for_generation(g, fold_count) == fold_for_generation(
                    g + fold_count, fold_count
                )

    def test_rejects_invalid(self):
        with pytest.raises(ConfigurationError):
            fold_for_generation(3, 0)
        with pytest.raises(ConfigurationError):
            fold_for_generation(-1, 3)


class TestLabelsFile:
    def test_roundtrip(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("# comment\nimg1,cat\nimg2,dog\nimg3,cat\n", encoding="utf-8")
        labels = load_labels_file(path)
        assert labels == {"img1": "cat", "img2": "dog", "img3": "cat"}

    def test_rejects_duplicates_and_garbage(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("img1,cat\nimg1,dog\n", encoding="utf-8")
        with pytest.raises(ConfigurationError):
            load_labels_file(path)
        path.write_text("no-comma-here\n", encoding="utf-8")
        with pytest.raises(ConfigurationError):
            load_labels_file(path)
