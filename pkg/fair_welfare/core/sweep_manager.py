import json
import logging
import os
import threading
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import replace
from datetime import datetime
from typing import Callable, List, Optional, Tuple

import pandas as pd

from ..logging.log_manager import LogManager
from ..models.data_models import (
    RESULTS_COLUMNS,
    ConstraintSpec,
    Dataset,
    DistanceMode,
    DistanceSpec,
    ExperimentConfig,
    InequalityParams,
    MetricSpecs,
    MetricsReport,
    ResultsRow,
    SolveResult,
    SolveStatus,
    SweepMetadata,
    Task,
    WelfareParams,
)
from ..solvers.base import BaseWelfareSolver, predict
from ..solvers.factory import SolverFactory
from .datakit import train_test_views
from .exceptions import (
    AllInfeasible,
    BenefitError,
    DomainCollapse,
    FairWelfareError,
    Infeasible,
    NonConvergence,
)
from .fairmetrics import full_report
from .persistence import save_model

logger = logging.getLogger(__name__)

Cell = Tuple[float, float, int]


def metric_specs_for(config: ExperimentConfig, alpha: float) -> MetricSpecs:
    """セルの α に合わせた指標の設定"""
    mode = (
        DistanceMode.NORMALIZED_EUCLIDEAN
        if config.task == Task.CLASSIFICATION
        else DistanceMode.LABEL_DISTANCE
    )
    return MetricSpecs(
        benefit=config.benefit,
        welfare=WelfareParams(alpha, config.welfare_convention),
        inequality=InequalityParams(
            beta=1.0 - alpha if config.atkinson_beta is None else config.atkinson_beta,
            ge_alpha=config.ge_alpha,
        ),
        distance=DistanceSpec(mode, block_cap=config.distance_block_cap),
    )


def report_with_floor(
    dataset: Dataset, predictions, specs: MetricSpecs, floor: float
) -> MetricsReport:
    """便益が 0 以下になる場合は floor で切り上げてレポートを作る（フラグ付き）"""
    try:
        return full_report(dataset, predictions, dataset.groups, specs)
    except BenefitError as e:
        logger.warning(f"便益を {floor:g} で切り上げて指標を計算します: {str(e)}")
        floored = replace(specs, benefit=specs.benefit.with_floor(floor))
        report = full_report(dataset, predictions, dataset.groups, floored)
        report.flags.append("benefit_floored")
        return report


class CellRunner:
    """(α, τ, fold) の1セルを解き、失敗時はリトライするクラス"""

    def __init__(
        self,
        config: ExperimentConfig,
        log_manager: LogManager,
        solver_builder: Callable[[int], BaseWelfareSolver],
    ):
        self.config = config
        self.log_manager = log_manager
        self.solver_builder = solver_builder

    def solve(self, cell: Cell, train: Dataset) -> SolveResult:
        """セルを解く

        NonConvergence の場合は内側の反復上限を2倍にして max_retries 回までやり直す。
        """
        alpha, tau, fold = cell
        spec = ConstraintSpec(alpha=alpha, tau=tau, benefit=self.config.benefit, scale_c=self.config.scale_c)
        max_retries = self.config.max_retries

        last_error: Optional[Exception] = None
        for attempt in range(max_retries + 1):
            solver = self.solver_builder(attempt)
            try:
                result = solver.solve_constrained(train, spec)
                self.log_manager.log_solve(
                    {"alpha": alpha, "tau": tau, "fold": fold, "attempt": attempt + 1}, result
                )
                return result
            except NonConvergence as e:
                last_error = e
                logger.warning(
                    f"セル (α={alpha}, τ={tau}, fold={fold}) が収束しません"
                    f"（試行 {attempt + 1}/{max_retries + 1}）: {str(e)}"
                )
                if attempt < max_retries:
                    logger.info("リトライを実行します...")
                    continue

        error_msg = (
            f"セル (α={alpha}, τ={tau}, fold={fold}) の学習に失敗しました。"
            f"{max_retries + 1}回の試行全てが失敗: {str(last_error)}"
        )
        logger.error(error_msg)
        raise last_error

    def run(self, cell: Cell, train: Dataset, test: Dataset) -> Tuple[ResultsRow, Optional[SolveResult]]:
        """セルを解いて評価し、結果表の1行を返す（失敗も行として記録）"""
        alpha, tau, fold = cell
        cell_info = {"alpha": alpha, "tau": tau, "fold": fold}
        try:
            result = self.solve(cell, train)
        except (Infeasible, AllInfeasible, DomainCollapse) as e:
            self.log_manager.log_failure(cell_info, e)
            return ResultsRow(alpha, tau, fold, SolveStatus.INFEASIBLE.value), None
        except NonConvergence as e:
            self.log_manager.log_failure(cell_info, e)
            return ResultsRow(alpha, tau, fold, SolveStatus.MAX_ITER.value), None
        except FairWelfareError as e:
            logger.error(f"セル (α={alpha}, τ={tau}, fold={fold}) でエラー: {str(e)}")
            self.log_manager.log_failure(cell_info, e)
            return ResultsRow(alpha, tau, fold, "error"), None

        specs = metric_specs_for(self.config, alpha)
        predictions = predict(result.model, test)
        report = report_with_floor(test, predictions, specs, self.config.solver.benefit_floor)
        row = ResultsRow(
            alpha=alpha,
            tau=tau,
            fold=fold,
            status=result.status.value,
            report=report,
            lam=result.lam,
            intercept=result.model.intercept,
        )
        return row, result


class SweepManager:
    """(α, τ, fold) グリッドの実行を管理するクラス"""

    def __init__(self, config: ExperimentConfig, log_manager: LogManager):
        """初期化

        Args:
            config (ExperimentConfig): 実験の設定
            log_manager (LogManager): ログ管理
        """
        self.config = config
        self.log_manager = log_manager

        # 出力ディレクトリの設定
        self.output_dir = config.output_dir
        self._ensure_output_directory()

        # 出力ファイルのパス設定
        self.results_file = os.path.join(self.output_dir, "results.csv")
        self.metadata_file = os.path.join(self.output_dir, "metadata.json")
        self.models_dir = os.path.join(self.output_dir, "models")
        self._metadata_lock = threading.Lock()

        self.cell_runner = CellRunner(config, log_manager, self._build_solver)

    def _ensure_output_directory(self) -> None:
        """出力ディレクトリの確保"""
        if not os.path.exists(self.output_dir):
            os.makedirs(self.output_dir)
            logger.info(f"出力ディレクトリを作成しました: {self.output_dir}")

    def _build_solver(self, attempt: int) -> BaseWelfareSolver:
        solver_config = self.config.solver
        if attempt:
            solver_config = replace(solver_config, max_inner=solver_config.max_inner * 2**attempt)
        return SolverFactory.create(self.config.task, solver_config)

    def _save_metadata(self, metadata: SweepMetadata) -> None:
        """メタデータの保存"""
        with self._metadata_lock:
            with open(self.metadata_file, "w", encoding="utf-8") as f:
                json.dump(metadata.to_dict(), ensure_ascii=False, indent=2, fp=f)

    def cells(self) -> List[Cell]:
        folds = max(1, self.config.folds)
        return [
            (alpha, tau, fold)
            for alpha in self.config.alphas
            for tau in self.config.taus
            for fold in range(folds)
        ]

    def _model_path(self, cell: Cell) -> str:
        alpha, tau, fold = cell
        return os.path.join(self.models_dir, f"alpha{alpha:g}_tau{tau:g}_fold{fold}.yaml")

    def write_results(self, rows: List[ResultsRow]) -> str:
        """(α, τ, fold) 順に並べた結果表を CSV で保存"""
        ordered = sorted(rows, key=ResultsRow.sort_key)
        frame = pd.DataFrame([row.to_dict() for row in ordered], columns=list(RESULTS_COLUMNS))
        frame.to_csv(self.results_file, index=False)
        logger.info(f"結果表を保存しました: {self.results_file}（{len(ordered)} 行）")
        return self.results_file

    def run(self, dataset: Dataset) -> List[ResultsRow]:
        """グリッド全体を実行

        Args:
            dataset (Dataset): 前処理済みのデータセット

        Returns:
            List[ResultsRow]: (α, τ, fold) 順の結果

        Raises:
            AllInfeasible: 1つのセルも成功しなかった場合
        """
        logger.info("=== スイープ開始 ===")
        views = {fold: (train, test) for fold, train, test in train_test_views(
            dataset, self.config.folds, self.config.seed
        )}
        cells = self.cells()
        total = len(cells)
        self._save_metadata(SweepMetadata("running", 0, total, datetime.now()))

        rows: List[ResultsRow] = []
        completed = 0
        workers = self.config.jobs or os.cpu_count() or 1
        try:
            with ThreadPoolExecutor(max_workers=workers) as executor:
                futures = {
                    executor.submit(self.cell_runner.run, cell, *views[cell[2]]): cell
                    for cell in cells
                }
                for future in as_completed(futures):
                    cell = futures[future]
                    row, result = future.result()
                    rows.append(row)
                    if result is not None and self.config.save_models:
                        save_model(
                            self._model_path(cell),
                            result.model,
                            self.config.task,
                            spec={"alpha": cell[0], "tau": cell[1], "fold": cell[2]},
                            status=result.to_dict(),
                        )
                    completed += 1
                    logger.info(f"セル {completed}/{total} 完了: α={cell[0]}, τ={cell[1]}, fold={cell[2]} → {row.status}")
                    self._save_metadata(SweepMetadata("running", completed, total, datetime.now()))
        except Exception as e:
            logger.error(f"スイープ中にエラー: {str(e)}")
            self._save_metadata(
                SweepMetadata("error", completed, total, datetime.now(), error_message=str(e))
            )
            raise

        self.write_results(rows)
        succeeded = sum(1 for row in rows if row.report is not None)
        if not succeeded:
            self._save_metadata(
                SweepMetadata("error", completed, total, datetime.now(), error_message="全セルが失敗")
            )
            raise AllInfeasible(total)

        self._save_metadata(SweepMetadata("completed", completed, total, datetime.now()))
        logger.info(f"=== スイープ完了: {succeeded}/{total} セルが成功 ===")
        return sorted(rows, key=ResultsRow.sort_key)
