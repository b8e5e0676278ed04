"""厚生制約付き学習の実験を統括するモジュール"""

import json
import logging
import os
from dataclasses import replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..logging.log_manager import LogManager
from ..logging.logger import setup_logging
from ..mechanisms.factory import MechanismFactory
from ..models.data_models import (
    BenefitSpec,
    BinaryBenefitTable,
    ConstraintSpec,
    CsvSchema,
    Dataset,
    ExperimentConfig,
    GroupRule,
    LabelDomain,
    MechanismResult,
    MetricsReport,
    PreprocessConfig,
    ResultsRow,
    SolveResult,
    SolverConfig,
    Task,
    WelfareConvention,
)
from ..solvers.base import predict
from ..solvers.factory import SolverFactory
from .datakit import load_csv, preprocess
from .exceptions import ParameterValidationError
from .benefits import fit_binary_benefit
from .persistence import save_model
from .sweep_manager import CellRunner, SweepManager, metric_specs_for, report_with_floor

logger = logging.getLogger(__name__)


def _task_of(config: Dict[str, Any]) -> Task:
    try:
        return Task(str(config.get("task", Task.REGRESSION.value)).lower())
    except ValueError as e:
        supported = ", ".join(SolverFactory.get_supported_tasks())
        raise ParameterValidationError(
            "task", f"未サポートのタスク: {config.get('task')}. サポートされているタスク: {supported}"
        ) from e


def _convention_of(welfare: Dict[str, Any]) -> WelfareConvention:
    value = welfare.get("convention", WelfareConvention.MEAN.value)
    try:
        return WelfareConvention(str(value).lower())
    except ValueError as e:
        supported = ", ".join(c.value for c in WelfareConvention)
        raise ParameterValidationError(
            "welfare.convention", f"未サポートの集計方法: {value}. サポートされている集計方法: {supported}"
        ) from e


def _optional_float(value: Any) -> Optional[float]:
    return None if value is None else float(value)


def _float_list(name: str, values: Any) -> Tuple[float, ...]:
    if values is None:
        raise ParameterValidationError(name, "指定されていません")
    if isinstance(values, (int, float, str)):
        values = [values]
    try:
        return tuple(float(value) for value in values)
    except (TypeError, ValueError) as e:
        raise ParameterValidationError(name, f"数値のリストではありません: {values!r}") from e


def build_benefit(config: Dict[str, Any]) -> BenefitSpec:
    """設定から便益関数を作成

    benefit.kind が未指定の場合、回帰は b = ŷ - y + 1、分類は便益の表を使う。
    表の便益で floor が未指定なら solver.benefit_floor を下限にする。
    """
    task = _task_of(config)
    section = config.get("benefit", {})
    kind = section.get("kind") or ("regression" if task == Task.REGRESSION else "table")
    floor = _optional_float(section.get("floor"))

    if kind == "regression":
        if task != Task.REGRESSION:
            raise ParameterValidationError("benefit.kind", "分類には便益の表が必要です")
        return BenefitSpec.regression(floor)
    if kind != "table":
        raise ParameterValidationError("benefit.kind", f"未サポートの便益: {kind}")

    table = section.get("table") or {}
    try:
        values = {key: float(table[key]) for key in ("b00", "b01", "b10", "b11")}
    except KeyError as e:
        raise ParameterValidationError("benefit.table", f"{e.args[0]} がありません") from e
    try:
        label_domain = LabelDomain(section.get("label_domain", LabelDomain.BINARY_PM1.value))
    except ValueError as e:
        raise ParameterValidationError("benefit.label_domain", str(e)) from e

    spec = fit_binary_benefit(BinaryBenefitTable(**values), label_domain)
    if floor is None:
        floor = float(config.get("solver", {}).get("benefit_floor", SolverConfig.benefit_floor))
    return spec.with_floor(floor)


def build_solver_config(config: Dict[str, Any]) -> SolverConfig:
    values = dict(config.get("solver", {}))
    if values.get("seed") is None:
        values["seed"] = config.get("seed", 0)
    return SolverConfig.from_dict(values)


def build_schema(config: Dict[str, Any]) -> CsvSchema:
    """data セクションから CSV スキーマを作成"""
    section = config.get("data", {})
    feature_columns = section.get("feature_columns")
    return CsvSchema(
        label_column=str(section.get("label_column", "y")),
        task=_task_of(config),
        group_column=section.get("group_column"),
        feature_columns=tuple(feature_columns) if feature_columns else None,
        max_missing_fraction=_optional_float(section.get("max_missing_fraction")),
        drop_missing=bool(section.get("drop_missing", True)),
    )


def build_preprocess(config: Dict[str, Any]) -> PreprocessConfig:
    section = config.get("preprocess", {})
    rule = section.get("group_rule")
    group_rule = None
    if rule:
        if "column" not in rule or "threshold" not in rule:
            raise ParameterValidationError("preprocess.group_rule", "column と threshold が必要です")
        group_rule = GroupRule(column=str(rule["column"]), threshold=float(rule["threshold"]))
    return PreprocessConfig(
        standardize=bool(section.get("standardize", True)),
        exempt_columns=tuple(section.get("exempt_columns") or ()),
        flip_labels=bool(section.get("flip_labels", False)),
        target_rescale=_optional_float(section.get("target_rescale")),
        group_rule=group_rule,
    )


def build_experiment_config(config: Dict[str, Any]) -> ExperimentConfig:
    """入れ子の設定辞書から ExperimentConfig を作成

    Raises:
        ParameterValidationError: 値の型や範囲が不正な場合
    """
    welfare = config.get("welfare", {})
    sweep = config.get("sweep", {})
    inequality = config.get("inequality", {})
    jobs = sweep.get("jobs")
    return ExperimentConfig(
        task=_task_of(config),
        benefit=build_benefit(config),
        alphas=_float_list("welfare.alphas", welfare.get("alphas")),
        taus=_float_list("welfare.taus", welfare.get("taus")),
        solver=build_solver_config(config),
        schema=build_schema(config),
        data_path=config.get("data", {}).get("path"),
        preprocess=build_preprocess(config),
        output_dir=str(config.get("output_dir", "output")),
        seed=int(config.get("seed", 0)),
        scale_c=float(welfare.get("scale_c", 5.0)),
        folds=int(sweep.get("folds", 1)),
        jobs=None if jobs is None else int(jobs),
        max_retries=int(sweep.get("max_retries", 2)),
        save_models=bool(sweep.get("save_models", False)),
        distance_block_cap=int(config.get("metrics", {}).get("distance_block_cap", 10_000)),
        ge_alpha=float(inequality.get("ge_alpha", 2.0)),
        atkinson_beta=_optional_float(inequality.get("beta")),
        welfare_convention=_convention_of(welfare),
    )


class WelfareExperiment:
    """データの読み込みから学習・評価・保存までを統括するメインクラス"""

    def __init__(self, config: Dict[str, Any]):
        """初期化

        Args:
            config (Dict[str, Any]): 設定情報（get_default_config と同じ構造）

        Raises:
            ParameterValidationError: 必須の設定が不足している場合
        """
        self.config = config
        self._validate_config()

        self.output_dir = str(self.config["output_dir"])

        # ロギングの設定
        logging_config = self.config.get("logging", {})
        setup_logging(
            self.output_dir,
            logging_config.get("level", "INFO"),
            bool(logging_config.get("file", True)),
        )
        logger.info("=== 厚生制約付き学習の実験を初期化 ===")

        self._initialize_components()

        logger.info("初期化が完了しました")

    def _validate_config(self) -> None:
        """設定の検証

        Raises:
            ParameterValidationError: 必須の設定が不足している場合
        """
        required_keys = ["output_dir", "task", "welfare", "solver"]
        for key in required_keys:
            if key not in self.config:
                raise ParameterValidationError(key, "必須の設定が不足しています")
        _task_of(self.config)

    def _initialize_components(self) -> None:
        """各コンポーネントの初期化"""
        self.experiment_config = build_experiment_config(self.config)
        self.log_manager = LogManager(self.output_dir)
        self.solver = SolverFactory.create(
            self.experiment_config.task, self.experiment_config.solver
        )
        logger.info(
            f"タスク '{self.experiment_config.task.value}'、"
            f"α={list(self.experiment_config.alphas)}、τ={list(self.experiment_config.taus)}"
        )

    @property
    def task(self) -> Task:
        return self.experiment_config.task

    def load_dataset(self, path: Optional[str] = None) -> Dataset:
        """CSV を読み込んで前処理したデータセットを返す

        Raises:
            ParameterValidationError: データのパスが指定されていない場合
        """
        path = path or self.experiment_config.data_path
        if not path:
            raise ParameterValidationError("data.path", "データのパスが指定されていません")
        dataset = load_csv(path, self.experiment_config.schema)
        dataset = preprocess(dataset, self.experiment_config.preprocess)
        logger.info(f"データセットを読み込みました: {path}（n={dataset.n}, k={dataset.k}）")
        if dataset.flags:
            logger.info(f"データのフラグ: {', '.join(dataset.flags)}")
        return dataset

    def report(
        self, dataset: Dataset, predictions: Sequence[float], alpha: Optional[float] = None
    ) -> MetricsReport:
        """予測値の指標一式（便益が 0 以下なら floor で切り上げてフラグを立てる）"""
        alpha = self.experiment_config.alphas[0] if alpha is None else alpha
        specs = metric_specs_for(self.experiment_config, alpha)
        return report_with_floor(
            dataset, predictions, specs, self.experiment_config.solver.benefit_floor
        )

    def train(
        self,
        dataset: Dataset,
        alpha: Optional[float] = None,
        tau: Optional[float] = None,
        model_path: Optional[str] = None,
    ) -> Tuple[SolveResult, ResultsRow]:
        """1つの (α, τ) で制約付き学習を行い、モデルを保存して結果表の1行を返す

        スイープの1セル（fold 0、学習と評価に全データ）と同じ行を返す。

        Raises:
            Infeasible: 制約を満たすモデルがない場合
            NonConvergence: リトライしても収束しない場合
        """
        alpha = self.experiment_config.alphas[0] if alpha is None else alpha
        tau = self.experiment_config.taus[0] if tau is None else tau
        runner = CellRunner(self.experiment_config, self.log_manager, self._solver_for_attempt)
        result = runner.solve((alpha, tau, 0), dataset)

        predictions = predict(result.model, dataset)
        row = ResultsRow(
            alpha=alpha,
            tau=tau,
            fold=0,
            status=result.status.value,
            report=self.report(dataset, predictions, alpha),
            lam=result.lam,
            intercept=result.model.intercept,
        )

        model_path = model_path or os.path.join(self.output_dir, "model.yaml")
        spec = ConstraintSpec(
            alpha=alpha,
            tau=tau,
            benefit=self.experiment_config.benefit,
            scale_c=self.experiment_config.scale_c,
        )
        save_model(model_path, result.model, self.task, spec.to_dict(), result.to_dict())
        logger.info(
            f"学習完了: status={result.status.value}, λ={result.lam:.6g}, 損失={result.loss:.6g}"
        )
        return result, row

    def _solver_for_attempt(self, attempt: int):
        if not attempt:
            return self.solver
        solver_config = self.experiment_config.solver
        return SolverFactory.create(
            self.task, replace(solver_config, max_inner=solver_config.max_inner * 2**attempt)
        )

    def sweep(self, dataset: Dataset) -> List[ResultsRow]:
        """(α, τ, fold) のグリッドを実行して results.csv を書き出す"""
        manager = SweepManager(self.experiment_config, self.log_manager)
        return manager.run(dataset)

    def run_mechanism(
        self,
        dataset: Dataset,
        kind: Optional[str] = None,
        params: Optional[Dict[str, Any]] = None,
        model_path: Optional[str] = None,
        distances: Optional[np.ndarray] = None,
    ) -> Tuple[MechanismResult, MetricsReport]:
        """公平性メカニズムを実行し、結果のモデルの指標一式を返す

        結果は <output_dir>/mechanism.json とモデルファイルに保存する。
        """
        section = dict(self.config.get("mechanism", {}))
        section.update({key: value for key, value in (params or {}).items() if value is not None})
        kind = kind or section.pop("kind", None)
        section.pop("kind", None)
        if not kind:
            raise ParameterValidationError("mechanism.kind", "メカニズムが指定されていません")

        mechanism = MechanismFactory.create(kind, self.experiment_config.solver, section)
        result = mechanism.run(dataset, distances)
        self.log_manager.log_mechanism(str(kind), result)

        report = self.report(dataset, predict(result.model, dataset))

        result_path = os.path.join(self.output_dir, "mechanism.json")
        with open(result_path, "w", encoding="utf-8") as f:
            json.dump(result.to_dict(), f, ensure_ascii=False, indent=2, default=str)
        save_model(
            model_path or os.path.join(self.output_dir, "model.yaml"),
            result.model,
            self.task,
            {"mechanism": str(kind), **{key: value for key, value in section.items() if value is not None}},
            {"status": result.status.value, "max_violation": result.max_violation},
        )
        logger.info(
            f"メカニズム '{kind}' 完了: 追加制約 {result.added_constraints} 個、"
            f"最大違反 {result.max_violation:.6g}"
        )
        return result, report
