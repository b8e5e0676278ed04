import logging

import numpy as np
import pytest

from fair_welfare.core.datakit import gen_realizable, gen_synthetic
from fair_welfare.models.data_models import (
    BenefitProfile,
    Dataset,
    GroupAssignment,
    SolverConfig,
    Task,
)


def homogeneous(*columns):
    """特徴量の列に同次座標の列を付けた行列"""
    columns = [np.asarray(column, dtype=float) for column in columns]
    n = columns[0].size if columns else 1
    return np.column_stack(columns + [np.ones(n)])


@pytest.fixture(autouse=True)
def restore_root_logger():
    """setup_logging が差し替えたルートロガーのハンドラーを元に戻す"""
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    yield
    for handler in root.handlers:
        if handler not in handlers:
            handler.close()
    root.handlers[:] = handlers
    root.setLevel(level)


@pytest.fixture
def example_one_profiles():
    """便益がすべて 0.9 のモデル A と、(0.6, 1, 1, 1.1) のモデル B"""
    return {
        "A": BenefitProfile.from_values([0.9, 0.9, 0.9, 0.9]),
        "B": BenefitProfile.from_values([0.6, 1.0, 1.0, 1.1]),
    }


@pytest.fixture
def figure_one_profiles():
    return {
        "A": BenefitProfile.from_values([0.8] * 5),
        "B": BenefitProfile.from_values([0.5, 0.6, 0.8, 0.9, 1.2]),
        "C": BenefitProfile.from_values([1.0] * 5),
        "D": BenefitProfile.from_values([0.78, 0.9, 0.92, 1.1, 1.3]),
    }


@pytest.fixture
def example_one_dataset():
    """ラベルがすべて 1、グループが {1,2}/{3,4} の4点回帰データ"""
    return Dataset(
        features=homogeneous([0.0, 1.0, 2.0, 3.0]),
        labels=np.ones(4),
        task=Task.REGRESSION,
        groups=GroupAssignment.from_values([0, 0, 1, 1]),
    )


@pytest.fixture
def realizable():
    """n=200, k=5, seed=7 の実現可能データと θ*"""
    return gen_realizable(200, 5, seed=7)


@pytest.fixture
def four_point_dataset():
    """最小二乗解の平均厚生 (α=0.5) が 0.95 を下回る4点データ"""
    return Dataset(
        features=homogeneous([0.0, 1.0, 2.0, 3.0]),
        labels=np.array([0.2, 1.6, 0.4, 1.8]),
        task=Task.REGRESSION,
    )


@pytest.fixture
def synthetic_regression():
    return gen_synthetic(120, 3, seed=11, task=Task.REGRESSION, noise=0.5, group_shift=1.0)


@pytest.fixture
def small_classification_config():
    return SolverConfig(tol_g=1e-6, max_inner=2000, restarts=3, seed=0)
