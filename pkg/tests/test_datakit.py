import numpy as np
import pytest

from conftest import homogeneous
from fair_welfare.core.datakit import (
    dataset_summary,
    gen_realizable,
    gen_synthetic,
    kfold_split,
    load_csv,
    preprocess,
    train_test_views,
)
from fair_welfare.core.exceptions import (
    MalformedCsv,
    MalformedNumber,
    MissingColumn,
    MissingValue,
    ParameterValidationError,
    TooFewRows,
)
from fair_welfare.models.data_models import (
    CsvSchema,
    Dataset,
    GroupRule,
    PreprocessConfig,
    Task,
)


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestLoadCsv:
    def test_basic(self, tmp_path):
        path = write(tmp_path, "a,b,y,group\n1,2,0.5,0\n3,4,1.5,1\n")
        dataset = load_csv(path, CsvSchema("y", Task.REGRESSION, group_column="group"))
        assert dataset.column_names == ("a", "b", "intercept")
        np.testing.assert_array_equal(dataset.features, [[1, 2, 1], [3, 4, 1]])
        np.testing.assert_array_equal(dataset.labels, [0.5, 1.5])
        assert dataset.groups.counts == (1, 1)

    def test_missing_column(self, tmp_path):
        path = write(tmp_path, "a,y\n1,2\n")
        with pytest.raises(MissingColumn):
            load_csv(path, CsvSchema("y", Task.REGRESSION, group_column="group"))

    def test_malformed_number_row(self, tmp_path):
        path = write(tmp_path, "a,y\n1,2\n3,abc\n")
        with pytest.raises(MalformedNumber) as excinfo:
            load_csv(path, CsvSchema("y", Task.REGRESSION))
        assert excinfo.value.row == 2
        assert excinfo.value.column == "y"

    def test_malformed_csv(self, tmp_path):
        path = write(tmp_path, "")
        with pytest.raises(MalformedCsv):
            load_csv(path, CsvSchema("y", Task.REGRESSION))

    def test_drops_missing_rows(self, tmp_path):
        path = write(tmp_path, "a,y\n1,2\n,3\n4,5\n")
        dataset = load_csv(path, CsvSchema("y", Task.REGRESSION))
        assert dataset.n == 2
        assert "dropped_rows:1" in dataset.flags

    def test_missing_rows_rejected(self, tmp_path):
        path = write(tmp_path, "a,y\n1,2\n,3\n")
        with pytest.raises(MissingValue):
            load_csv(path, CsvSchema("y", Task.REGRESSION, drop_missing=False))

    def test_sparse_column_dropped(self, tmp_path):
        path = write(tmp_path, "a,b,y\n1,,2\n2,,3\n3,1,4\n")
        dataset = load_csv(path, CsvSchema("y", Task.REGRESSION, max_missing_fraction=0.5))
        assert dataset.column_names == ("a", "intercept")
        assert dataset.n == 3

    def test_classification_labels_mapped(self, tmp_path):
        path = write(tmp_path, "a,y\n1,0\n2,1\n")
        dataset = load_csv(path, CsvSchema("y", Task.CLASSIFICATION))
        np.testing.assert_array_equal(dataset.labels, [-1, 1])


class TestPreprocess:
    def dataset(self):
        return Dataset(
            features=np.column_stack([[1.0, 2.0, 3.0], [0.0, 1.0, 0.0], [5.0, 5.0, 5.0], np.ones(3)]),
            labels=[1.0, 2.0, 4.0],
            task=Task.REGRESSION,
            column_names=("x", "flag", "const", "intercept"),
        )

    def test_standardize(self):
        result = preprocess(self.dataset(), PreprocessConfig())
        column = result.features[:, 0]
        assert column.mean() == pytest.approx(0.0, abs=1e-12)
        assert column.std() == pytest.approx(1.0)
        np.testing.assert_array_equal(result.features[:, 1], [0, 1, 0])
        np.testing.assert_array_equal(result.features[:, 2], [5, 5, 5])
        assert "zero_variance:const" in result.flags

    def test_exempt_and_disabled(self):
        dataset = self.dataset()
        exempt = preprocess(dataset, PreprocessConfig(exempt_columns=("x",)))
        np.testing.assert_array_equal(exempt.features[:, 0], [1, 2, 3])
        untouched = preprocess(dataset, PreprocessConfig(standardize=False))
        np.testing.assert_array_equal(untouched.features, dataset.features)

    def test_rescale_and_flip(self):
        result = preprocess(self.dataset(), PreprocessConfig(target_rescale=2.0, flip_labels=True))
        np.testing.assert_allclose(result.labels, [2.0, 1.5, 0.5])

    def test_flip_classification(self):
        dataset = Dataset(features=homogeneous([0.0, 1.0]), labels=[-1.0, 1.0], task=Task.CLASSIFICATION)
        result = preprocess(dataset, PreprocessConfig(flip_labels=True))
        np.testing.assert_array_equal(result.labels, [1, -1])
        with pytest.raises(ParameterValidationError):
            preprocess(dataset, PreprocessConfig(target_rescale=2.0))

    def test_group_rule(self):
        result = preprocess(self.dataset(), PreprocessConfig(standardize=False, group_rule=GroupRule("x", 1.5)))
        np.testing.assert_array_equal(result.groups.membership, [0, 1, 1])

    def test_group_rule_unknown_column(self):
        with pytest.raises(MissingColumn):
            preprocess(self.dataset(), PreprocessConfig(group_rule=GroupRule("age", 30)))


class TestGenerators:
    def test_realizable(self, realizable):
        dataset, theta = realizable
        assert (dataset.n, dataset.k) == (200, 5)
        np.testing.assert_allclose(theta.predict(dataset.features), dataset.labels)

    def test_deterministic(self):
        first, theta_a = gen_realizable(20, 3, seed=1)
        second, theta_b = gen_realizable(20, 3, seed=1)
        np.testing.assert_array_equal(first.features, second.features)
        np.testing.assert_array_equal(theta_a.weights, theta_b.weights)

    def test_parameter_checks(self):
        with pytest.raises(ParameterValidationError):
            gen_realizable(0, 3, seed=0)
        with pytest.raises(ParameterValidationError):
            gen_realizable(10, 1, seed=0)

    def test_synthetic(self, synthetic_regression):
        assert synthetic_regression.groups.counts == (60, 60)
        classification = gen_synthetic(50, 3, seed=2, task=Task.CLASSIFICATION)
        assert set(np.unique(classification.labels)) <= {-1.0, 1.0}


class TestFolds:
    def test_partition(self):
        splits = kfold_split(10, 3, seed=4)
        tests = np.concatenate([test for _, test in splits])
        np.testing.assert_array_equal(np.sort(tests), np.arange(10))
        for train, test in splits:
            assert np.intersect1d(train, test).size == 0
            assert train.size + test.size == 10

    def test_seeded(self):
        first = kfold_split(10, 3, seed=4)
        second = kfold_split(10, 3, seed=4)
        for (_, a), (_, b) in zip(first, second):
            np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize("folds", [1, 11])
    def test_too_few_rows(self, folds):
        with pytest.raises(TooFewRows):
            kfold_split(10, folds, seed=0)

    def test_single_fold_view(self, example_one_dataset):
        views = train_test_views(example_one_dataset, 1, seed=0)
        assert views == [(0, example_one_dataset, example_one_dataset)]

    def test_summary(self, example_one_dataset):
        summary = dataset_summary(example_one_dataset)
        assert summary["n"] == 4
        assert summary["group0_count"] == 2
        assert summary["group1_count"] == 2
        assert summary["task"] == "regression"
