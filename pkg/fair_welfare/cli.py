"""コマンドラインインターフェース

サブコマンド: train, sweep, rank, metrics, mechanism, gen。
結果の行は標準出力に CSV で書き、ログとエラーは標準エラー出力に書く。
"""

import argparse
import json
import logging
import os
import sys
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from .config.settings import apply_overrides, get_default_config, load_config
from .core.benefits import build_profile
from .core.datakit import dataset_summary, gen_realizable, gen_synthetic, kfold_split
from .core.exceptions import FairWelfareError, LengthMismatch, ParameterValidationError
from .core.experiment import WelfareExperiment, build_benefit
from .core.fairmetrics import hard_predictions
from .core.persistence import load_model, load_predictions, save_dataset, save_model
from .core.welfare import rank_models
from .mechanisms.factory import MechanismFactory
from .models.data_models import (
    RESULTS_COLUMNS,
    MeasureKind,
    RankingMeasure,
    Task,
)
from .solvers.base import predict
from .solvers.factory import SolverFactory

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_DATA = 3


def _float_list(text: str) -> List[float]:
    """"0.3,0.5" のようなカンマ区切りの数値"""
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"数値のリストではありません: {text}") from e


def _write_rows(records: Sequence[Dict[str, Any]], columns: Optional[Sequence[str]] = None) -> None:
    frame = pd.DataFrame(list(records), columns=list(columns) if columns else None)
    frame.to_csv(sys.stdout, index=False)


def _build_config(args: argparse.Namespace, overrides: Dict[str, Any]) -> Dict[str, Any]:
    """設定ファイル → コマンドラインの順に重ねた設定"""
    config = load_config(args.config) if args.config else get_default_config()
    common = {
        "seed": args.seed,
        "output_dir": args.output_dir,
        "sweep.jobs": args.jobs,
        "logging.level": args.log_level,
    }
    if args.seed is not None:
        common["solver.seed"] = args.seed
    return apply_overrides(config, {**common, **overrides})


def _data_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides = {
        "task": getattr(args, "task", None),
        "data.path": getattr(args, "data", None),
        "data.label_column": getattr(args, "label_column", None),
        "data.group_column": getattr(args, "group_column", None),
        "preprocess.target_rescale": getattr(args, "target_rescale", None),
        "benefit.kind": getattr(args, "benefit", None),
        "benefit.floor": getattr(args, "benefit_floor", None),
    }
    if getattr(args, "no_standardize", False):
        overrides["preprocess.standardize"] = False
    if getattr(args, "flip_labels", False):
        overrides["preprocess.flip_labels"] = True
    return overrides


def _solver_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    return {
        "solver.tol_c": args.tol_c,
        "solver.tol_g": args.tol_g,
        "solver.lambda_max": args.lambda_max,
        "solver.max_inner": args.max_inner,
        "solver.restarts": args.restarts,
    }


# --- サブコマンド -----------------------------------------------------------


def cmd_train(args: argparse.Namespace) -> int:
    """単一の (α, τ) で学習してモデルを保存し、結果の1行を出力"""
    overrides = {**_data_overrides(args), **_solver_overrides(args)}
    if args.alpha is not None:
        overrides["welfare.alphas"] = [args.alpha]
    if args.tau is not None:
        overrides["welfare.taus"] = [args.tau]
    experiment = WelfareExperiment(_build_config(args, overrides))

    dataset = experiment.load_dataset()
    _, row = experiment.train(dataset, model_path=args.model_out)
    _write_rows([row.to_dict()], RESULTS_COLUMNS)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    """(α, τ, fold) のグリッドを実行して results.csv を書き出す"""
    overrides = {
        **_data_overrides(args),
        **_solver_overrides(args),
        "welfare.alphas": args.alphas,
        "welfare.taus": args.taus,
        "sweep.folds": args.folds,
    }
    if args.save_models:
        overrides["sweep.save_models"] = True
    experiment = WelfareExperiment(_build_config(args, overrides))

    dataset = experiment.load_dataset()
    rows = experiment.sweep(dataset)
    _write_rows([row.to_dict() for row in rows], RESULTS_COLUMNS)
    return EXIT_OK


def cmd_rank(args: argparse.Namespace) -> int:
    """予測ファイルごとの便益プロファイルを尺度で順位付け"""
    overrides = {
        "task": args.task,
        "benefit.kind": args.benefit,
        "benefit.floor": args.benefit_floor,
    }
    config = _build_config(args, overrides)
    benefit = build_benefit(config)
    task = Task(config["task"])

    kind = MeasureKind(args.measure)
    parameter = args.parameter
    if parameter is None:
        alpha = float(config["welfare"]["alphas"][0])
        beta = config["inequality"].get("beta")
        parameter = {
            MeasureKind.WELFARE: alpha,
            MeasureKind.ATKINSON: 1.0 - alpha if beta is None else float(beta),
            MeasureKind.GE: float(config["inequality"]["ge_alpha"]),
        }[kind]
    measure = RankingMeasure(kind, parameter)

    labels = load_predictions(args.labels, args.label_column)
    predictions = {}
    for path in args.predictions:
        name = os.path.splitext(os.path.basename(path))[0]
        values = load_predictions(path, args.prediction_column)
        predictions[name] = hard_predictions(values) if task == Task.CLASSIFICATION else values

    if args.folds and args.folds > 1:
        records = []
        for fold, (_, test) in enumerate(kfold_split(labels.size, args.folds, config["seed"])):
            profiles = {
                name: build_profile(_aligned(name, values, labels)[test], labels[test], benefit)
                for name, values in predictions.items()
            }
            for rank, entry in enumerate(rank_models(profiles, measure), start=1):
                records.append({"fold": fold, "rank": rank, "name": entry.name, "measure": measure.label, "score": entry.score})
        _write_rows(records)
        return EXIT_OK

    profiles = {
        name: build_profile(_aligned(name, values, labels), labels, benefit)
        for name, values in predictions.items()
    }
    ranked = rank_models(profiles, measure)
    _write_rows(
        [
            {"rank": rank, "name": entry.name, "measure": measure.label, "score": entry.score}
            for rank, entry in enumerate(ranked, start=1)
        ]
    )
    return EXIT_OK


def _aligned(name: str, values: np.ndarray, labels: np.ndarray) -> np.ndarray:
    if values.size != labels.size:
        raise LengthMismatch(f"予測ファイル '{name}'", labels.size, values.size)
    return values


def cmd_metrics(args: argparse.Namespace) -> int:
    """データセットと予測（またはモデル）から指標一式を1行で出力"""
    overrides = _data_overrides(args)
    if args.alpha is not None:
        overrides["welfare.alphas"] = [args.alpha]
    experiment = WelfareExperiment(_build_config(args, overrides))
    dataset = experiment.load_dataset()

    if args.model:
        model, _ = load_model(args.model)
        predictions = predict(model, dataset)
    elif args.predictions:
        predictions = load_predictions(args.predictions, args.prediction_column)
    else:
        raise ParameterValidationError("predictions", "--predictions か --model が必要です")

    report = experiment.report(dataset, predictions)
    _write_rows([report.to_dict()])
    return EXIT_OK


def cmd_mechanism(args: argparse.Namespace) -> int:
    """公平性メカニズムを実行し、結果のモデルの指標を1行で出力"""
    overrides = {
        **_data_overrides(args),
        **_solver_overrides(args),
        "mechanism.kind": args.kind,
        "mechanism.delta": args.delta,
        "mechanism.epsilon": args.epsilon,
        "mechanism.tau": args.mech_tau,
        "mechanism.mu_grid": args.mu_grid,
    }
    if args.literal_direction:
        overrides["mechanism.literal_direction"] = True
    if args.alpha is not None:
        overrides["welfare.alphas"] = [args.alpha]
    experiment = WelfareExperiment(_build_config(args, overrides))

    dataset = experiment.load_dataset()
    result, report = experiment.run_mechanism(dataset, model_path=args.model_out)
    record = report.to_dict()
    record.update(
        {
            "mechanism": experiment.config["mechanism"]["kind"],
            "added_constraints": result.added_constraints,
            "max_violation": result.max_violation,
            "average_violation": result.average_violation,
            "status": result.status.value,
        }
    )
    _write_rows([record])
    return EXIT_OK


def cmd_gen(args: argparse.Namespace) -> int:
    """合成データセット（と実現可能な場合は θ*）を書き出す"""
    seed = 0 if args.seed is None else args.seed
    if args.kind == "realizable":
        dataset, theta = gen_realizable(args.n, args.k, seed, args.theta_scale)
        save_dataset(args.out, dataset)
        theta_path = args.theta_out or os.path.splitext(args.out)[0] + ".theta.yaml"
        save_model(
            theta_path,
            theta,
            Task.REGRESSION,
            {"generator": "realizable", "n": args.n, "k": args.k, "seed": seed},
        )
    else:
        dataset = gen_synthetic(
            args.n, args.k, seed, Task(args.task), args.noise, args.group_shift
        )
        save_dataset(args.out, dataset)
    logger.info(f"データセットを生成しました: {args.out}")
    _write_rows([dataset_summary(dataset)])
    return EXIT_OK


# --- パーサー -------------------------------------------------------------


def _add_data_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", help="データセットの CSV")
    parser.add_argument("--task", choices=SolverFactory.get_supported_tasks())
    parser.add_argument("--label-column")
    parser.add_argument("--group-column")
    parser.add_argument("--no-standardize", action="store_true", help="特徴量を標準化しない")
    parser.add_argument("--flip-labels", action="store_true")
    parser.add_argument("--target-rescale", type=float)
    parser.add_argument("--benefit", choices=["regression", "table"])
    parser.add_argument("--benefit-floor", type=float)


def _add_solver_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--tol-c", type=float)
    parser.add_argument("--tol-g", type=float)
    parser.add_argument("--lambda-max", type=float)
    parser.add_argument("--max-inner", type=int)
    parser.add_argument("--restarts", type=int)


def build_parser() -> argparse.ArgumentParser:
    """引数パーサーの構築"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML 設定ファイル")
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int, help="スイープのワーカー数（既定: CPU 数）")
    common.add_argument("--output-dir")
    common.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    parser = argparse.ArgumentParser(
        prog="fair-welfare",
        description="CRRA 社会的厚生の制約付き学習と公平性指標",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    train = subparsers.add_parser("train", parents=[common], help="単一の (α, τ) で学習")
    _add_data_arguments(train)
    _add_solver_arguments(train)
    train.add_argument("--alpha", type=float)
    train.add_argument("--tau", type=float)
    train.add_argument("--model-out", help="モデルの保存先（既定: <output_dir>/model.yaml）")
    train.set_defaults(handler=cmd_train)

    sweep = subparsers.add_parser("sweep", parents=[common], help="(α, τ) グリッドの実行")
    _add_data_arguments(sweep)
    _add_solver_arguments(sweep)
    sweep.add_argument("--alphas", type=_float_list)
    sweep.add_argument("--taus", type=_float_list)
    sweep.add_argument("--folds", type=int)
    sweep.add_argument("--save-models", action="store_true")
    sweep.set_defaults(handler=cmd_sweep)

    rank = subparsers.add_parser("rank", parents=[common], help="予測ファイルの順位付け")
    rank.add_argument("predictions", nargs="+", help="予測ファイル（ファイル名がモデル名）")
    rank.add_argument("--labels", required=True, help="正解ラベルの CSV")
    rank.add_argument("--label-column")
    rank.add_argument("--prediction-column")
    rank.add_argument("--task", choices=SolverFactory.get_supported_tasks())
    rank.add_argument("--benefit", choices=["regression", "table"])
    rank.add_argument("--benefit-floor", type=float)
    rank.add_argument("--measure", choices=[kind.value for kind in MeasureKind], default="welfare")
    rank.add_argument("--parameter", type=float, help="α（厚生・GE）または β（Atkinson）")
    rank.add_argument("--folds", type=int, help="分割ごとのスコアを出力")
    rank.set_defaults(handler=cmd_rank)

    metrics = subparsers.add_parser("metrics", parents=[common], help="指標一式の計算")
    _add_data_arguments(metrics)
    metrics.add_argument("--predictions", help="予測値の CSV")
    metrics.add_argument("--prediction-column")
    metrics.add_argument("--model", help="保存したモデル（予測値の代わり）")
    metrics.add_argument("--alpha", type=float)
    metrics.set_defaults(handler=cmd_metrics)

    mechanism = subparsers.add_parser("mechanism", parents=[common], help="公平性メカニズムの実行")
    _add_data_arguments(mechanism)
    _add_solver_arguments(mechanism)
    mechanism.add_argument("--kind", choices=MechanismFactory.get_supported_mechanisms())
    mechanism.add_argument("--delta", type=float)
    mechanism.add_argument("--epsilon", type=float)
    mechanism.add_argument("--tau", dest="mech_tau", type=float, help="GE₂ の上限")
    mechanism.add_argument("--mu-grid", type=_float_list)
    mechanism.add_argument("--literal-direction", action="store_true")
    mechanism.add_argument("--alpha", type=float, help="レポートの厚生に使う α")
    mechanism.add_argument("--model-out")
    mechanism.set_defaults(handler=cmd_mechanism)

    gen = subparsers.add_parser("gen", parents=[common], help="合成データの生成")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--k", type=int, required=True)
    gen.add_argument("--out", required=True)
    gen.add_argument("--theta-out")
    gen.add_argument("--kind", choices=["realizable", "synthetic"], default="realizable")
    gen.add_argument("--task", choices=SolverFactory.get_supported_tasks(), default="regression")
    gen.add_argument("--theta-scale", type=float, default=1.0)
    gen.add_argument("--noise", type=float, default=0.5)
    gen.add_argument("--group-shift", type=float, default=1.0)
    gen.set_defaults(handler=cmd_gen)

    return parser


def _report_error(error: BaseException, exit_code: int) -> None:
    """機械可読なエラー行を標準エラー出力に書く"""
    record = {"error": type(error).__name__, "exit_code": exit_code, "message": str(error)}
    print(json.dumps(record, ensure_ascii=False), file=sys.stderr)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """エントリーポイント

    Returns:
        int: 終了コード（0 成功、1 内部エラー、2 実行不可能・非収束、3 入力・データエラー）
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse の使い方エラーは入力エラーとして扱う
        return EXIT_OK if e.code in (0, None) else EXIT_DATA
    handler: Callable[[argparse.Namespace], int] = args.handler

    try:
        return handler(args)
    except FairWelfareError as e:
        logger.error(f"{args.command} に失敗しました: {str(e)}")
        _report_error(e, e.exit_code)
        return e.exit_code
    except OSError as e:
        logger.error(f"入出力エラー: {str(e)}")
        _report_error(e, EXIT_DATA)
        return EXIT_DATA
    except Exception as e:
        logger.exception(f"予期しないエラー: {str(e)}")
        _report_error(e, EXIT_INTERNAL)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
