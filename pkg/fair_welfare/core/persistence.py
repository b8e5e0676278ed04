"""モデルとデータセットのテキスト形式での保存・読み込み"""

import logging
import os
from typing import Any, Dict, Optional, Tuple

import numpy as np
import pandas as pd
import yaml

from ..models.data_models import (
    SCHEMA_VERSION,
    CsvSchema,
    Dataset,
    LinearModel,
    Task,
)
from .datakit import load_csv
from .exceptions import ConfigError, MalformedNumber, MissingColumn

logger = logging.getLogger(__name__)


def _ensure_parent(path: str) -> None:
    parent = os.path.dirname(path)
    if parent and not os.path.exists(parent):
        os.makedirs(parent)


def _plain(value: Any) -> Any:
    """numpy の値を YAML に書ける Python の値に変換"""
    if isinstance(value, dict):
        return {str(key): _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    return value


def save_model(
    path: str,
    model: LinearModel,
    task: Task,
    spec: Optional[Dict[str, Any]] = None,
    status: Optional[Dict[str, Any]] = None,
) -> None:
    """モデルを YAML で保存（浮動小数点は repr 表現で往復一致）

    Args:
        path (str): 出力先
        model (LinearModel): 保存するモデル
        task (Task): タスクの種類
        spec (Optional[Dict[str, Any]]): 制約仕様のエコー
        status (Optional[Dict[str, Any]]): ソルバーの状態
    """
    _ensure_parent(path)
    record = {
        "schema_version": SCHEMA_VERSION,
        "task": task.value,
        "k": model.k,
        "weights": [float(w) for w in model.weights],
        "spec": _plain(spec or {}),
        "status": _plain(status or {}),
    }
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(record, f, sort_keys=False, allow_unicode=True)
    logger.info(f"モデルを保存しました: {path}")


def load_model(path: str) -> Tuple[LinearModel, Dict[str, Any]]:
    """保存したモデルを読み込む

    Returns:
        Tuple[LinearModel, Dict[str, Any]]: モデルとその他の記録
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            record = yaml.safe_load(f)
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(path, str(e)) from e
    if not isinstance(record, dict) or "weights" not in record:
        raise ConfigError(path, "weights がありません")

    weights = np.array(record["weights"], dtype=float)
    if weights.size != record.get("k", weights.size):
        raise ConfigError(path, f"k={record['k']} と weights の長さが一致しません")
    return LinearModel(weights), record


def save_dataset(
    path: str,
    dataset: Dataset,
    label_column: str = "y",
    group_column: str = "group",
) -> None:
    """データセットを CSV で保存（同次座標の列は書き出さない）"""
    _ensure_parent(path)
    frame = pd.DataFrame(dataset.features[:, :-1], columns=list(dataset.column_names[:-1]))
    frame[label_column] = dataset.labels
    if dataset.groups is not None:
        frame[group_column] = dataset.groups.membership.astype(int)
    frame.to_csv(path, index=False)
    logger.info(f"データセットを保存しました: {path}（{dataset.n} 行）")


def load_dataset(
    path: str,
    task: Task,
    label_column: str = "y",
    group_column: Optional[str] = "group",
) -> Dataset:
    """save_dataset の出力を読み込む"""
    columns = pd.read_csv(path, nrows=0).columns
    schema = CsvSchema(
        label_column=label_column,
        task=task,
        group_column=group_column if group_column in columns else None,
    )
    return load_csv(path, schema)


def load_predictions(path: str, column: Optional[str] = None) -> np.ndarray:
    """予測値ファイル（1列、またはヘッダー付き CSV の指定列）を読み込む"""
    frame = pd.read_csv(path, float_precision="round_trip")
    name = column or frame.columns[-1]
    if name not in frame.columns:
        raise MissingColumn(name)
    values = pd.to_numeric(frame[name], errors="coerce").to_numpy(dtype=float)
    if np.isnan(values).any():
        row = int(np.flatnonzero(np.isnan(values))[0])
        raise MalformedNumber(row + 1, name, frame[name].iloc[row])
    return values
