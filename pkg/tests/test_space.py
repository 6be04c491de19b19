import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evopinn import exprtree as et
from evopinn import space


class TestSequences:
    @pytest.mark.parametrize("n,value", [(1, 1), (2, 1), (3, 2), (21, 10946)])
    def test_fib(self, n, value):
        assert space.fib(n) == value

    @given(st.integers(min_value=3, max_value=300))
    @settings(max_examples=40, deadline=None)
    def test_fib_recurrence(self, n):
        assert space.fib(n) == space.fib(n - 1) + space.fib(n - 2)

    @pytest.mark.parametrize("b,value", [(0, 1), (1, 1), (3, 5)])
    def test_catalan(self, b, value):
        assert space.catalan(b) == value

    @given(st.integers(min_value=1, max_value=60))
    @settings(max_examples=30, deadline=None)
    def test_catalan_recurrence(self, n):
        total = sum(space.catalan(i) * space.catalan(n - 1 - i) for i in range(n))
        assert space.catalan(n) == total


class TestTreeShapes:
    def test_single_unary(self):
        assert space.tree_shape_count(1, 0) == 1

    def test_binary_with_two_leaf_chains(self):
        assert space.tree_shape_count(2, 1) == 1

    def test_binary_needs_two_unary_leaves(self):
        assert space.tree_shape_count(1, 1) == 0


class TestPublishedSizes:
    def test_structure_exact(self):
        assert space.structure_space() == 283328
        assert space.sci3(283328) == "2.83e05"

    def test_structure_single_term(self):
        assert space.structure_space(space.SpaceConfig(n_min=3, n_max=3, n_neu=1)) == 5
        assert space.structure_space(space.SpaceConfig(n_min=2, n_max=2, n_neu=1)) == 2

    @pytest.mark.parametrize("m,display", [(3, "2.65e05"), (5, "9.97e08"), (7, "3.34e12"),
                                           (None, "3.40e12")])
    def test_activation_sizes(self, m, display):
        assert space.sci3(space.activation_space(m=m)) == display

    @pytest.mark.parametrize("m,display", [(3, "7.51e10"), (5, "2.82e14"), (7, "9.47e17"),
                                           (None, "9.64e17")])
    def test_model_sizes(self, m, display):
        assert space.sci3(space.model_space(m=m)) == display

    def test_empty_width_set(self):
        assert space.model_space(space.SpaceConfig(n_neu=0)) == 0


class TestShortcutOracle:
    @pytest.mark.parametrize("n,count", [(2, 2), (3, 5), (4, 13)])
    def test_small_counts(self, n, count):
        assert space.enumerate_shortcut_configs(n) == count

    def test_matches_fibonacci(self):
        for n in range(2, 8):
            assert space.enumerate_shortcut_configs(n) == space.fib(2 * n - 1)

    def test_configs_are_valid_and_distinct(self):
        seen = set()
        for cfg in space.iter_shortcut_configs(4):
            assert cfg not in seen
            seen.add(cfg)
            for (a1, b1), (a2, b2) in zip(cfg, cfg[1:]):
                assert b1 <= a2  # disjoint interiors, endpoints may touch
        assert len(seen) == 13


class TestActivationEnumeration:
    def test_cross_check_small_operator_set(self):
        unary = ("sin", "tanh")
        binary = ("add",)
        cfg = space.SpaceConfig(unary_ops=2, binary_ops=1, max_nodes=3, max_params=3)
        trees = list(space.enumerate_activation_trees(unary, binary, 3, 3))
        assert len(trees) == space.activation_space(cfg)
        texts = {et.canonical_string(t) for t in trees}
        assert len(texts) == len(trees)  # equivalent expressions stay distinct
        assert all(et.validate(t) == [] for t in trees)

    def test_single_node_full_library(self):
        cfg = space.SpaceConfig(max_nodes=1)
        trees = list(space.enumerate_activation_trees(et.UNARY_IDS, et.BINARY_IDS, 1, 3))
        assert len(trees) == space.activation_space(cfg, m=1) == 92
