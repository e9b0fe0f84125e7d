import numpy as np
import pytest

from rotforge import rng as _rng
from rotforge.forests import (ForestConfig, ForestMember, ForestModel,
                              build_hybrid, build_member,
                              build_random_attribute_rotf, build_random_forest,
                              build_rotation_forest, estimate_model_bytes,
                              forest_distributions, forest_predict, load_model,
                              model_from_jsonable, model_to_jsonable,
                              predicted_classes, save_model)
from rotforge.rotation import RotationConfig, pca_fit
from rotforge.trees import Leaf, TreeConfig, build_tree_arrays

from conftest import make_dataset


@pytest.fixture
def dataset():
    gen = np.random.default_rng(21)
    X = gen.normal(size=(60, 6))
    y = (X[:, 0] + X[:, 1] > 0).astype(int)
    y[:4] = [0, 1, 0, 1]  # ensure both classes regardless of draw
    return make_dataset(X, y)


def _strip_times(model):
    obj = model_to_jsonable(model)
    obj["build_seconds"] = 0.0
    obj["per_tree_seconds"] = []
    return obj


class TestRotationForest:
    def test_member_and_group_counts(self, dataset):
        cfg = ForestConfig(k=5, rotation=RotationConfig(f=3), seed=1)
        model = build_rotation_forest(dataset, cfg)
        assert len(model.members) == 5
        for member in model.members:
            assert member.rotation is not None
            assert len(member.rotation.groups) == 2  # ceil(6/3)
        assert len(model.per_tree_seconds) == 5

    def test_wrong_combination_rejected(self, dataset):
        with pytest.raises(ValueError):
            build_rotation_forest(dataset, ForestConfig(base="RandomTree"))

    def test_deterministic(self, dataset):
        cfg = ForestConfig(k=3, seed=9)
        a = _strip_times(build_rotation_forest(dataset, cfg))
        b = _strip_times(build_rotation_forest(dataset, cfg))
        assert a == b

    def test_collapse_to_single_rotated_tree(self, dataset):
        # k=1, one full-width group, all cases: one C4.5 tree on globally
        # PCA-rotated data, reproducible by hand from the same seeds
        rotation = RotationConfig(f=dataset.m, p=1.0, class_inclusion_prob=1.0)
        cfg = ForestConfig(k=1, rotation=rotation, seed=4)
        model = build_rotation_forest(dataset, cfg)
        member = model.members[0]
        assert len(member.rotation.groups) == 1
        group = member.rotation.groups[0]
        assert len(group.attribute_indices) == dataset.m

        # manual replication: PCA on the full (permuted) column set
        cols = list(group.attribute_indices)
        means, projection = pca_fit(dataset.values[:, cols])
        np.testing.assert_allclose(group.means, means, atol=1e-12)
        np.testing.assert_allclose(group.projection, projection, atol=1e-12)

        X = (dataset.values[:, cols] - means) @ projection.T
        seed_i = _rng.mix64(cfg.seed, 0)
        tree = build_tree_arrays(X, dataset.labels, 2,
                                 TreeConfig(kind="C45", seed=_rng.mix64(seed_i, 2)))
        from rotforge.trees import tree_predict_batch
        np.testing.assert_array_equal(forest_distributions(model, dataset.values),
                                      tree_predict_batch(tree, X))


class TestRandomForest:
    def test_structure(self, dataset):
        cfg = ForestConfig(k=4, base="RandomTree", transform="BAG", seed=2)
        model = build_random_forest(dataset, cfg)
        assert len(model.members) == 4
        assert all(m.rotation is None for m in model.members)

    def test_distinct_seeds_distinct_models(self, dataset):
        cfg = ForestConfig(k=2, base="RandomTree", transform="BAG")
        a = build_random_forest(dataset, ForestConfig(k=2, base="RandomTree",
                                                      transform="BAG", seed=0))
        b = build_random_forest(dataset, ForestConfig(k=2, base="RandomTree",
                                                      transform="BAG", seed=1))
        assert _strip_times(a) != _strip_times(b)

    def test_wrong_combination_rejected(self, dataset):
        with pytest.raises(ValueError):
            build_random_forest(dataset, ForestConfig(base="C45",
                                                      transform="BAG"))


class TestHybrids:
    def test_rt_bag_is_random_forest(self, dataset):
        cfg = ForestConfig(k=3, seed=6)
        hybrid = build_hybrid(dataset, "RandomTree", "BAG", cfg)
        rf = build_random_forest(dataset, ForestConfig(k=3, base="RandomTree",
                                                       transform="BAG", seed=6))
        assert _strip_times(hybrid) == _strip_times(rf)

    def test_c45_pca_is_rotation_forest(self, dataset):
        cfg = ForestConfig(k=3, seed=6)
        hybrid = build_hybrid(dataset, "C45", "PCA", cfg)
        rotf = build_rotation_forest(dataset, cfg)
        assert _strip_times(hybrid) == _strip_times(rotf)

    def test_bag_pca_single_full_group(self, dataset):
        model = build_hybrid(dataset, "C45", "BAG_PCA", ForestConfig(k=2, seed=1))
        for member in model.members:
            assert member.rotation is not None
            assert len(member.rotation.groups) == 1
            assert len(member.rotation.groups[0].attribute_indices) == dataset.m

    def test_invalid_combination(self, dataset):
        with pytest.raises(ValueError):
            build_hybrid(dataset, "C45", "NOPE", ForestConfig())


class TestRandomAttributeVariant:
    def test_no_op_when_max_atts_covers_m(self, dataset):
        cfg = ForestConfig(k=2, seed=3)
        variant = build_random_attribute_rotf(dataset, dataset.m + 5, cfg)
        full = build_rotation_forest(dataset, cfg)
        assert _strip_times(variant) == _strip_times(full)

    def test_subset_sizes(self):
        gen = np.random.default_rng(5)
        ds = make_dataset(gen.normal(size=(50, 20)), np.arange(50) % 2)
        model = build_random_attribute_rotf(ds, 8, ForestConfig(k=4, seed=2))
        for member in model.members:
            assert len(member.attribute_subset) == 8
            assert sorted(member.rotation.source_attributes) == \
                sorted(member.attribute_subset)

    def test_subsets_drawn_independently(self):
        gen = np.random.default_rng(6)
        ds = make_dataset(gen.normal(size=(50, 20)), np.arange(50) % 2)
        model = build_random_attribute_rotf(ds, 8, ForestConfig(k=6, seed=0))
        subsets = {m.attribute_subset for m in model.members}
        assert len(subsets) > 1


def _leaf_member(distribution):
    return ForestMember(attribute_subset=(0,), rotation=None,
                        tree=Leaf(np.array(distribution, dtype=float), 1))


def _toy_model(distributions):
    return ForestModel(members=tuple(_leaf_member(d) for d in distributions),
                       config=ForestConfig(k=len(distributions)),
                       class_names=("a", "b"), build_seconds=0.0,
                       per_tree_seconds=(0.0,) * len(distributions))


class TestForestPredict:
    def test_two_member_tie(self):
        model = _toy_model([[1, 0], [0, 1]])
        dist = forest_predict(model, np.zeros(1))
        np.testing.assert_allclose(dist, [0.5, 0.5])
        assert predicted_classes(dist[None, :])[0] == 0  # tie -> lowest index

    def test_identical_members(self):
        model = _toy_model([[0.25, 0.75]] * 4)
        np.testing.assert_allclose(forest_predict(model, np.zeros(1)),
                                   [0.25, 0.75])

    def test_three_member_average(self):
        model = _toy_model([[1, 0], [1, 0], [0, 1]])
        dist = forest_predict(model, np.zeros(1))
        np.testing.assert_allclose(dist, [2 / 3, 1 / 3])
        assert predicted_classes(dist[None, :])[0] == 0

    def test_distributions_sum_to_one(self, dataset):
        model = build_rotation_forest(dataset, ForestConfig(k=3, seed=0))
        dists = forest_distributions(model, dataset.values)
        np.testing.assert_allclose(dists.sum(axis=1), 1.0, atol=1e-12)

    def test_prefix_matches_smaller_build(self, dataset):
        big = build_rotation_forest(dataset, ForestConfig(k=6, seed=8))
        small = build_rotation_forest(dataset, ForestConfig(k=3, seed=8))
        np.testing.assert_array_equal(
            forest_distributions(big, dataset.values, max_members=3),
            forest_distributions(small, dataset.values))


class TestSerialization:
    def test_round_trip_bit_exact(self, dataset, tmp_path):
        model = build_rotation_forest(dataset, ForestConfig(k=3, seed=5))
        path = tmp_path / "model.json"
        save_model(model, str(path))
        clone = load_model(str(path))
        np.testing.assert_array_equal(
            forest_distributions(clone, dataset.values),
            forest_distributions(model, dataset.values))

    def test_version_check(self, dataset):
        obj = model_to_jsonable(build_rotation_forest(dataset,
                                                      ForestConfig(k=1)))
        obj["version"] = 999
        with pytest.raises(ValueError):
            model_from_jsonable(obj)

    def test_size_estimate_grows_with_members(self, dataset):
        one = build_rotation_forest(dataset, ForestConfig(k=1, seed=0))
        three = build_rotation_forest(dataset, ForestConfig(k=3, seed=0))
        assert estimate_model_bytes(three) > estimate_model_bytes(one) > 0


class TestBuildMember:
    def test_case_override_restricts_training(self, dataset):
        cfg = ForestConfig(k=1, seed=0)
        member = build_member(dataset, cfg, 0,
                              case_indices=np.arange(10))
        assert member.rotation is not None  # built on the reduced subset

    def test_attr_override(self, dataset):
        cfg = ForestConfig(k=1, seed=0)
        member = build_member(dataset, cfg, 0, attrs=np.array([0, 2, 4]))
        assert member.attribute_subset == (0, 2, 4)
