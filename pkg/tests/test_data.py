import io

import numpy as np
import pytest
from scipy import sparse

from core import ContractViolation, EmptyGroupError, ParseError
from data import (
    DATASET_SIZES,
    GroupRule,
    dataset_path,
    parse_libsvm,
    scale_features,
    split_dataset,
    synthetic_classifier_data,
)
from problems import LinearClassifierData


def _alternating(n=30, d=3):
    features = np.zeros((n, d))
    features[:, 0] = np.arange(n) % 2
    features[:, 1:] = np.arange(n)[:, None] + 1.0
    labels = np.where(np.arange(n) % 3 == 0, 1.0, -1.0)
    return LinearClassifierData(sparse.csr_matrix(features), labels)


class TestParse:
    def test_sparse_row(self):
        data = parse_libsvm(io.StringIO("1 1:0.5 3:2\n"))
        assert data.features.shape == (1, 3)
        assert data.features[0, 0] == 0.5
        assert data.features[0, 1] == 0.0
        assert data.features[0, 2] == 2.0
        np.testing.assert_array_equal(data.labels, [1.0])

    def test_zero_label_maps_to_minus_one(self):
        data = parse_libsvm(io.StringIO("0 2:1\n"))
        np.testing.assert_array_equal(data.labels, [-1.0])
        assert data.features[0, 1] == 1.0

    def test_signed_labels_kept(self):
        data = parse_libsvm(io.StringIO("+1 1:1\n-1 2:1\n"))
        np.testing.assert_array_equal(data.labels, [1.0, -1.0])

    def test_unsorted_indices_accepted(self):
        data = parse_libsvm(io.StringIO("1 3:2 1:0.5\n"))
        assert data.features[0, 0] == 0.5
        assert data.features[0, 2] == 2.0

    def test_fixed_feature_count(self):
        assert parse_libsvm(io.StringIO("1 1:1\n"), n_features=5).dimension == 5

    def test_empty_input(self):
        assert parse_libsvm(io.StringIO("")).n == 0

    @pytest.mark.parametrize("text, line", [
        ("1 1:0.5\n1 1:abc\n", 2),
        ("1 1:0.5\n-1 2:1\nxyz 1:1\n", 3),
        ("1 2\n", 1),
        ("1 1:1 1:2\n", 1),
        ("1 0:1\n", 1),
        ("1 1:1\n2 1:1\n", 2),
    ])
    def test_errors_carry_line_numbers(self, text, line):
        with pytest.raises(ParseError) as info:
            parse_libsvm(io.StringIO(text))
        assert info.value.line_number == line

    def test_invalid_utf8_is_a_parse_error(self, tmp_path):
        path = tmp_path / "latin1.libsvm"
        path.write_bytes(b"1 1:1\n-1 2:1 # caf\xe9\n")
        with pytest.raises(ParseError, match="UTF-8") as info:
            parse_libsvm(path)
        assert info.value.line_number == 2

    def test_reads_files(self, tmp_path):
        path = tmp_path / "tiny.libsvm"
        path.write_text("1 1:1\n0 2:1\n", encoding="utf-8")
        assert parse_libsvm(path).n == 2


class TestGroupRule:
    def test_comparisons(self):
        values = np.array([0.0, 1.0, 2.0, 3.0])
        np.testing.assert_array_equal(GroupRule("between", (1, 2)).matches(values), [False, True, True, False])
        np.testing.assert_array_equal(GroupRule("outside", (1, 2)).matches(values), [True, False, False, True])
        np.testing.assert_array_equal(GroupRule(">=", (2,)).matches(values), [False, False, True, True])
        np.testing.assert_array_equal(GroupRule("!=", (0,)).matches(values), [False, True, True, True])

    def test_constant_count(self):
        with pytest.raises(ContractViolation):
            GroupRule("between", (1.0,))
        with pytest.raises(ContractViolation):
            GroupRule("~", (1.0,))

    def test_from_dict(self):
        assert GroupRule.from_dict({"comparison": "<", "constants": [25]}) == GroupRule("<", (25.0,))


class TestSplit:
    def test_two_to_one_partition(self):
        data = _alternating()
        split = split_dataset(data, 0, GroupRule("==", (1.0,)), seed=3)
        assert split.sizes["D"] == 20
        assert split.sizes["D_p"] + split.sizes["D_u"] == 10
        everything = np.concatenate([split.rows["D"], split.rows["D_p"], split.rows["D_u"]])
        np.testing.assert_array_equal(np.sort(everything), np.arange(30))

    def test_groups_follow_the_rule(self):
        data = _alternating()
        split = split_dataset(data, 0, GroupRule("==", (1.0,)), seed=3)
        assert np.all(split.group_p[:, 0].toarray() == 1.0)
        assert np.all(split.group_u[:, 0].toarray() == 0.0)

    def test_same_seed_same_split(self):
        data = _alternating()
        a = split_dataset(data, 0, GroupRule("==", (1.0,)), seed=9)
        b = split_dataset(data, 0, GroupRule("==", (1.0,)), seed=9)
        for key in ("D", "D_p", "D_u"):
            np.testing.assert_array_equal(a.rows[key], b.rows[key])

    def test_uneven_size(self):
        data = _alternating(n=31)
        assert split_dataset(data, 0, GroupRule("==", (1.0,)), seed=0).sizes["D"] == 20

    def test_rule_without_matches(self):
        with pytest.raises(EmptyGroupError, match=r"feature\[0\] == 5"):
            split_dataset(_alternating(), 0, GroupRule("==", (5.0,)), seed=0)

    def test_rule_matching_everything(self):
        with pytest.raises(EmptyGroupError):
            split_dataset(_alternating(), 0, GroupRule(">=", (0.0,)), seed=0)

    def test_group_feature_range(self):
        with pytest.raises(ContractViolation):
            split_dataset(_alternating(), 7, GroupRule("==", (1.0,)), seed=0)

    def test_indicator_feature(self):
        split = split_dataset(_alternating(), 0, GroupRule("==", (1.0,)), seed=3, indicator_feature=True)
        data = split.classifier_data()
        assert data.dimension == 4
        np.testing.assert_array_equal(split.group_p[:, 3].toarray().ravel(), 1.0)
        np.testing.assert_array_equal(split.group_u[:, 3].toarray().ravel(), -1.0)

    def test_drop_group_feature(self):
        split = split_dataset(_alternating(), 0, GroupRule("==", (1.0,)), seed=3, drop_group_feature=True)
        assert split.classifier_data().dimension == 2
        assert split.sizes["D_p"] > 0


class TestHelpers:
    def test_scale_features(self):
        data = scale_features(_alternating())
        assert abs(data.features).max() == pytest.approx(1.0)

    def test_synthetic_data(self):
        data = synthetic_classifier_data(n=200, d=5, seed=1)
        assert data.features.shape == (200, 5)
        assert set(np.unique(data.features[:, 0].toarray())) <= {0.0, 1.0}
        assert set(np.unique(data.labels)) == {-1.0, 1.0}

    def test_synthetic_needs_two_features(self):
        with pytest.raises(ContractViolation):
            synthetic_classifier_data(d=1)

    def test_dataset_path_reads_environment(self, monkeypatch, tmp_path):
        monkeypatch.setenv("SSG_DATA_DIR", str(tmp_path))
        assert dataset_path("compas") == tmp_path / "compas"

    def test_reference_sizes(self):
        assert DATASET_SIZES["compas"] == (6_172, 16)


@pytest.mark.skipif(not dataset_path("compas").exists(), reason="COMPAS libsvm file not installed")
def test_compas_split_sizes():
    data = parse_libsvm(dataset_path("compas"))
    assert (data.n, data.dimension) == DATASET_SIZES["compas"]
    split = split_dataset(data, 0, GroupRule("==", (1.0,)), seed=0)
    assert split.sizes["D"] == (2 * data.n) // 3
