import copy
import logging
import os
from typing import Any, Dict, Mapping

import yaml

from ..core.exceptions import ConfigError

logger = logging.getLogger(__name__)


def get_default_config() -> Dict[str, Any]:
    """デフォルト設定の取得"""
    return {
        "output_dir": "output",
        "task": "regression",
        "seed": 0,
        "data": {
            "path": None,
            "label_column": "y",
            "group_column": None,
            "feature_columns": None,
            "max_missing_fraction": None,
            "drop_missing": True,
        },
        "preprocess": {
            "standardize": True,
            "exempt_columns": [],
            "flip_labels": False,
            "target_rescale": None,
            "group_rule": None,
        },
        "benefit": {
            # None ならタスクで決める（回帰: regression、分類: table）
            "kind": None,
            # 偽陰性 0・正解 1・偽陽性 1.5（±1 ラベル）
            "table": {"b00": 1.0, "b01": 1.5, "b10": 0.0, "b11": 1.0},
            "label_domain": "binaryPM1",
            "floor": None,
        },
        "welfare": {
            "alphas": [0.5],
            "taus": [1.0],
            "scale_c": 5.0,
            "convention": "mean",
        },
        "inequality": {"beta": None, "ge_alpha": 2.0},
        "solver": {
            "tol_c": 1e-6,
            "tol_g": 1e-8,
            "lambda_max": 1e12,
            "max_outer": 200,
            "max_inner": 10000,
            "benefit_floor": 1e-8,
            "restarts": 8,
            "seed": 0,
        },
        "sweep": {"folds": 1, "jobs": None, "max_retries": 2, "save_models": False},
        "metrics": {"distance_block_cap": 10000},
        "mechanism": {
            "kind": "dwork_delta",
            "delta": 0.0,
            "epsilon": 0.1,
            "tau": 0.1,
            "mu_grid": None,
            "literal_direction": False,
        },
        "logging": {"level": "INFO", "file": True},
    }


def merge_config(base: Dict[str, Any], override: Mapping[str, Any]) -> Dict[str, Any]:
    """入れ子の辞書を再帰的にマージ（override が優先）"""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), dict):
            merged[key] = merge_config(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def load_config(config_path: str = "config.yaml") -> Dict[str, Any]:
    """設定ファイルの読み込み（デフォルト設定とマージ）

    Args:
        config_path (str): YAML 設定ファイルのパス

    Returns:
        Dict[str, Any]: デフォルト設定にファイルの内容を重ねた設定

    Raises:
        ConfigError: ファイルが読めない、またはマッピングでない場合
    """
    default_config = get_default_config()

    if not os.path.exists(config_path):
        logger.warning(f"設定ファイルが見つかりません: {config_path}")
        logger.info("デフォルト設定を使用します")
        return default_config

    try:
        with open(config_path, "r", encoding="utf-8") as f:
            config = yaml.safe_load(f)
    except (OSError, yaml.YAMLError) as e:
        logger.error(f"設定ファイルの読み込み中にエラー: {str(e)}")
        raise ConfigError(config_path, str(e)) from e

    if config is None:
        config = {}
    if not isinstance(config, dict):
        raise ConfigError(config_path, "トップレベルがマッピングではありません")

    logger.info(f"設定ファイルを読み込みました: {config_path}")
    return merge_config(default_config, config)


def apply_overrides(config: Dict[str, Any], overrides: Mapping[str, Any]) -> Dict[str, Any]:
    """"solver.tol_c" のようなドット区切りのキーで値を上書き

    値が None のキーは無視する（コマンドラインで指定されなかったフラグ）。
    """
    updated = copy.deepcopy(config)
    for dotted, value in overrides.items():
        if value is None:
            continue
        node = updated
        *parents, leaf = dotted.split(".")
        for key in parents:
            if not isinstance(node.get(key), dict):
                node[key] = {}
            node = node[key]
        node[leaf] = value
        logger.debug(f"設定を上書き: {dotted} = {value!r}")
    return updated


def dump_config(config: Mapping[str, Any]) -> str:
    """設定の正規のテキスト表現（キーをソートしたブロック形式 YAML）"""
    return yaml.safe_dump(dict(config), sort_keys=True, default_flow_style=False, allow_unicode=True)
