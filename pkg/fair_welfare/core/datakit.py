import logging
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from ..models.data_models import (
    CsvSchema,
    Dataset,
    GroupAssignment,
    GroupRule,
    LinearModel,
    PreprocessConfig,
    Task,
)
from .exceptions import (
    MalformedCsv,
    MalformedNumber,
    MissingColumn,
    MissingValue,
    ParameterValidationError,
    TooFewRows,
)

logger = logging.getLogger(__name__)

INTERCEPT_COLUMN = "intercept"


def make_generator(seed: int) -> np.random.Generator:
    """シードだけで決まるカウンタベースの乱数生成器"""
    return np.random.Generator(np.random.Philox(seed))


def _with_intercept(features: np.ndarray) -> np.ndarray:
    return np.hstack([features, np.ones((features.shape[0], 1))])


def _parse_column(raw: pd.Series, column: str) -> np.ndarray:
    """文字列の列を float に変換（欠損は NaN のまま）"""
    values = np.full(len(raw), np.nan)
    present = raw.notna().to_numpy()
    cells = raw.to_numpy(dtype=object)
    try:
        values[present] = cells[present].astype(str).astype(float)
    except ValueError:
        for position, cell in enumerate(cells):
            if not present[position]:
                continue
            try:
                float(cell)
            except ValueError:
                raise MalformedNumber(position + 1, column, cell) from None
        raise
    return values


def load_csv(path: str, schema: CsvSchema) -> Dataset:
    """CSV を読み込み、同次座標の列を追加した Dataset を作成

    Args:
        path (str): ヘッダー付き CSV のパス
        schema (CsvSchema): ラベル列・グループ列・特徴量列の指定

    Returns:
        Dataset: 標準化前のデータセット

    Raises:
        MissingColumn: 指定の列が存在しない場合
        MalformedNumber: 数値として読めないセルがある場合（行番号はデータ行の 1 始まり）
        MissingValue: drop_missing が False で欠損行がある場合
    """
    try:
        frame = pd.read_csv(path, dtype=str, skipinitialspace=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise MalformedCsv(path, str(e)) from e
    frame.columns = [str(column).strip() for column in frame.columns]
    logger.info(f"CSV を読み込みました: {path}（{len(frame)} 行）")

    required = [schema.label_column] + ([schema.group_column] if schema.group_column else [])
    if schema.feature_columns is not None:
        feature_columns = list(schema.feature_columns)
    else:
        feature_columns = [column for column in frame.columns if column not in required]
    for column in required + feature_columns:
        if column not in frame.columns:
            raise MissingColumn(column)

    parsed = {column: _parse_column(frame[column], column) for column in required + feature_columns}

    if schema.max_missing_fraction is not None:
        kept = []
        for column in feature_columns:
            fraction = float(np.isnan(parsed[column]).mean())
            if fraction > schema.max_missing_fraction:
                logger.warning(f"欠損率 {fraction:.1%} の列 '{column}' を削除します")
            else:
                kept.append(column)
        feature_columns = kept

    used = required + feature_columns
    missing_rows = np.zeros(len(frame), dtype=bool)
    for column in used:
        missing_rows |= np.isnan(parsed[column])
    flags: List[str] = []
    dropped = int(missing_rows.sum())
    if dropped:
        if not schema.drop_missing:
            raise MissingValue(dropped)
        logger.warning(f"欠損値を含む {dropped} 行を除外しました")
        flags.append(f"dropped_rows:{dropped}")

    keep = ~missing_rows
    if not keep.any():
        raise TooFewRows(0, 1)

    labels = parsed[schema.label_column][keep]
    if schema.task == Task.CLASSIFICATION and np.isin(labels, (0.0, 1.0)).all():
        logger.info("分類ラベル {0, 1} を {-1, +1} に変換します")
        labels = np.where(labels > 0, 1.0, -1.0)

    raw_features = np.column_stack(
        [parsed[column][keep] for column in feature_columns]
    ) if feature_columns else np.empty((int(keep.sum()), 0))

    groups = None
    if schema.group_column:
        groups = GroupAssignment.from_values(parsed[schema.group_column][keep])

    return Dataset(
        features=_with_intercept(raw_features),
        labels=labels,
        task=schema.task,
        groups=groups,
        column_names=tuple(feature_columns) + (INTERCEPT_COLUMN,),
        flags=tuple(flags),
    )


def apply_group_rule(dataset: Dataset, rule: GroupRule) -> Dataset:
    """列の値がしきい値を超えるインスタンスを G2 とするグループを設定"""
    if rule.column not in dataset.column_names[:-1]:
        raise MissingColumn(rule.column)
    values = dataset.features[:, dataset.column_names.index(rule.column)]
    groups = GroupAssignment.from_values(values > rule.threshold)
    g1, g2 = groups.counts
    logger.info(f"グループ規則 '{rule.column}' > {rule.threshold}: G1={g1}, G2={g2}")
    return Dataset(
        features=dataset.features,
        labels=dataset.labels,
        task=dataset.task,
        groups=groups,
        column_names=dataset.column_names,
        flags=dataset.flags,
    )


def is_binary_column(values: np.ndarray) -> bool:
    """{0, 1} または {-1, 1} ちょうどの値を持つ列か"""
    distinct = set(np.unique(values).tolist())
    return distinct == {0.0, 1.0} or distinct == {-1.0, 1.0}


def preprocess(dataset: Dataset, config: PreprocessConfig) -> Dataset:
    """非二値の特徴量を標準化し、ラベルを変換

    Args:
        dataset (Dataset): 読み込み済みデータセット
        config (PreprocessConfig): 前処理の設定

    Returns:
        Dataset: 前処理後のデータセット（分散 0 の列はフラグ付きでそのまま）
    """
    if config.group_rule is not None:
        dataset = apply_group_rule(dataset, config.group_rule)

    features = np.array(dataset.features, dtype=float)
    flags = list(dataset.flags)

    if config.standardize:
        for j, name in enumerate(dataset.column_names[:-1]):
            column = features[:, j]
            if name in config.exempt_columns or is_binary_column(column):
                continue
            std = float(column.std())
            if std == 0:
                logger.warning(f"列 '{name}' の分散が 0 のため標準化しません")
                flags.append(f"zero_variance:{name}")
                continue
            features[:, j] = (column - column.mean()) / std

    labels = np.array(dataset.labels, dtype=float)
    if config.target_rescale is not None:
        if dataset.task == Task.CLASSIFICATION:
            raise ParameterValidationError("target_rescale", "分類ラベルには使用できません")
        labels = labels / config.target_rescale
    if config.flip_labels:
        if dataset.task == Task.CLASSIFICATION:
            labels = -labels
        else:
            labels = (labels.min() + labels.max()) - labels

    return Dataset(
        features=features,
        labels=labels,
        task=dataset.task,
        groups=dataset.groups,
        column_names=dataset.column_names,
        flags=tuple(flags),
    )


def gen_realizable(
    n: int, k: int, seed: int, theta_scale: float = 1.0
) -> Tuple[Dataset, LinearModel]:
    """y_i = θ*·x_i を満たす実現可能なデータセットを生成

    Args:
        n (int): インスタンス数（1 以上）
        k (int): 同次座標を含む次元（2 以上）
        seed (int): 乱数シード
        theta_scale (float): θ* の成分のスケール

    Returns:
        Tuple[Dataset, LinearModel]: データセットと θ*
    """
    if n < 1:
        raise ParameterValidationError("n", "1 以上である必要があります")
    if k < 2:
        raise ParameterValidationError("k", "2 以上である必要があります")
    rng = make_generator(seed)
    features = _with_intercept(rng.standard_normal((n, k - 1)))
    theta = LinearModel(theta_scale * rng.standard_normal(k))
    dataset = Dataset(features=features, labels=theta.predict(features), task=Task.REGRESSION)
    return dataset, theta


def gen_synthetic(
    n: int,
    k: int,
    seed: int,
    task: Task = Task.REGRESSION,
    noise: float = 0.5,
    group_shift: float = 1.0,
) -> Dataset:
    """2グループを持つ実現不可能な合成データを生成

    G2 のインスタンスは最初の特徴量とラベルが group_shift だけずれる。
    """
    if n < 2:
        raise ParameterValidationError("n", "2 以上である必要があります")
    if k < 2:
        raise ParameterValidationError("k", "2 以上である必要があります")
    rng = make_generator(seed)
    membership = np.zeros(n, dtype=np.int8)
    membership[rng.permutation(n)[: n // 2]] = 1
    raw = rng.standard_normal((n, k - 1))
    raw[:, 0] += group_shift * membership
    features = _with_intercept(raw)
    theta = rng.standard_normal(k)
    signal = features @ theta - group_shift * membership + noise * rng.standard_normal(n)
    if task == Task.CLASSIFICATION:
        labels = np.where(signal >= 0, 1.0, -1.0)
    else:
        labels = signal
    return Dataset(
        features=features,
        labels=labels,
        task=task,
        groups=GroupAssignment(membership),
    )


def kfold_split(
    n: int, folds: int, seed: int
) -> List[Tuple[np.ndarray, np.ndarray]]:
    """シード付きの k 分割交差検証のインデックス

    Returns:
        List[Tuple[np.ndarray, np.ndarray]]: (学習, テスト) のインデックス組

    Raises:
        TooFewRows: folds < 2 または folds > n の場合
    """
    if folds < 2 or folds > n:
        raise TooFewRows(n, max(folds, 2))
    permutation = make_generator(seed).permutation(n)
    splits = []
    for test in np.array_split(permutation, folds):
        test = np.sort(test)
        train = np.setdiff1d(np.arange(n), test)
        splits.append((train, test))
    return splits


def train_test_views(
    dataset: Dataset, folds: int, seed: int
) -> List[Tuple[int, Dataset, Dataset]]:
    """k 分割の (fold 番号, 学習データ, テストデータ)。folds <= 1 なら全体を両方に使う"""
    if folds <= 1:
        return [(0, dataset, dataset)]
    return [
        (fold, dataset.subset(train), dataset.subset(test))
        for fold, (train, test) in enumerate(kfold_split(dataset.n, folds, seed))
    ]


def dataset_summary(dataset: Dataset) -> dict:
    """データセットの概要（gen の出力行）"""
    counts: Optional[Tuple[int, int]] = dataset.groups.counts if dataset.groups else None
    return {
        "n": dataset.n,
        "k": dataset.k,
        "task": dataset.task.value,
        "group0_count": counts[0] if counts else None,
        "group1_count": counts[1] if counts else None,
        "flags": ";".join(dataset.flags),
    }
