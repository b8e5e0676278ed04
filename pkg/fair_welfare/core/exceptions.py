"""ツールキット全体で使う例外クラスを定義するモジュール"""

from typing import Any, Optional


class FairWelfareError(Exception):
    """ツールキットの基底例外クラス

    exit_code は CLI が終了コードに変換する値
    """

    exit_code = 1


# --- 便益 -----------------------------------------------------------------


class BenefitError(FairWelfareError):
    """便益関数・便益プロファイル関連の基底例外"""

    exit_code = 3


class NonPositiveBenefit(BenefitError):
    """便益が正でない場合の例外"""

    def __init__(self, value: float, index: Optional[int] = None):
        self.value = value
        self.index = index
        where = f"（インデックス {index}）" if index is not None else ""
        super().__init__(f"便益が正ではありません{where}: {value!r}")


class UnknownLabel(BenefitError):
    """便益関数が定義されていないラベルの例外"""

    def __init__(self, label: Any):
        self.label = label
        super().__init__(f"便益関数に未定義のラベルです: {label!r}")


class EmptyProfile(BenefitError):
    """空の便益プロファイルの例外"""

    def __init__(self):
        super().__init__("便益プロファイルが空です")


class LengthMismatch(FairWelfareError):
    """入力の長さが一致しない場合の例外"""

    exit_code = 3

    def __init__(self, what: str, expected: int, actual: int):
        self.what = what
        self.expected = expected
        self.actual = actual
        super().__init__(
            f"{what} の長さが一致しません: 期待値 {expected}, 実際 {actual}"
        )


# --- 厚生・公平性指標 -------------------------------------------------------


class MetricError(FairWelfareError):
    """指標計算の基底例外"""

    exit_code = 3


class UnsupportedAlpha(MetricError):
    """サポートされないパラメータ α の例外"""

    def __init__(self, alpha: float, reason: str):
        self.alpha = alpha
        self.reason = reason
        super().__init__(f"α={alpha!r} はサポートされていません: {reason}")


class DegenerateData(MetricError):
    """全点が同一などで距離を正規化できない場合の例外"""

    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(f"データが退化しています: {reason}")


class EmptyGroup(MetricError):
    """グループが空の場合の例外"""

    def __init__(self, group: str):
        self.group = group
        super().__init__(f"グループ {group} に所属するインスタンスがありません")


class UndefinedRate(MetricError):
    """条件付きの率が定義できない場合の例外"""

    def __init__(self, kind: str, group: str):
        self.kind = kind
        self.group = group
        super().__init__(
            f"{kind} がグループ {group} で定義できません（条件となるラベルが存在しません）"
        )


# --- ソルバー ---------------------------------------------------------------


class SolverError(FairWelfareError):
    """最適化関連の基底例外"""

    exit_code = 2


class Infeasible(SolverError):
    """制約を満たす解が見つからない場合の例外"""

    def __init__(self, tau: float, detail: str = ""):
        self.tau = tau
        self.detail = detail
        suffix = f": {detail}" if detail else ""
        super().__init__(f"τ={tau!r} を満たす解が見つかりません{suffix}")


class LambdaOverflow(Infeasible):
    """双対変数が上限に達しても制約を満たせない場合の例外"""

    def __init__(self, tau: float, lambda_max: float, constraint_value: float):
        self.lambda_max = lambda_max
        self.constraint_value = constraint_value
        super().__init__(
            tau,
            f"λ が上限 {lambda_max:g} に達しました（制約値 {constraint_value!r}）",
        )


class AllInfeasible(SolverError):
    """グリッドの全点が実行不可能な場合の例外"""

    def __init__(self, count: int):
        self.count = count
        super().__init__(f"{count} 個のグリッド点すべてが実行不可能でした")


class DomainCollapse(SolverError):
    """直線探索が便益を下限以上に保てない場合の例外"""

    def __init__(self, floor: float, detail: str = ""):
        self.floor = floor
        suffix = f": {detail}" if detail else ""
        super().__init__(f"便益を下限 {floor:g} 以上に保てません{suffix}")


class NonConvergence(SolverError):
    """反復回数の上限までに収束しなかった場合の例外"""

    def __init__(self, iterations: int, gradient_norm: float, detail: str = ""):
        self.iterations = iterations
        self.gradient_norm = gradient_norm
        suffix = f": {detail}" if detail else ""
        super().__init__(
            f"{iterations} 回の反復で収束しませんでした"
            f"（勾配ノルム {gradient_norm:.3e}）{suffix}"
        )


# --- データ・設定 -----------------------------------------------------------


class DataError(FairWelfareError):
    """入力データ関連の基底例外"""

    exit_code = 3


class MissingColumn(DataError):
    """必要な列が存在しない場合の例外"""

    def __init__(self, column: str):
        self.column = column
        super().__init__(f"列 '{column}' が見つかりません")


class MalformedNumber(DataError):
    """数値として解釈できないセルの例外"""

    def __init__(self, row: int, column: str, value: Any):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"{row} 行目の列 '{column}' が数値ではありません: {value!r}")


class MalformedCsv(DataError):
    """CSV として解釈できないファイルの例外"""

    def __init__(self, path: str, reason: str):
        self.path = path
        self.reason = reason
        super().__init__(f"CSV '{path}' を解釈できません: {reason}")


class MissingValue(DataError):
    """欠損値を含む行がある場合の例外"""

    def __init__(self, count: int):
        self.count = count
        super().__init__(f"欠損値を含む行が {count} 行あります")


class TooFewRows(DataError):
    """行数が足りない場合の例外"""

    def __init__(self, rows: int, required: int):
        self.rows = rows
        self.required = required
        super().__init__(f"行数が不足しています: {rows} 行（必要: {required} 行以上）")


class ConfigError(DataError):
    """設定ファイルが読めない場合の例外"""

    def __init__(self, path: str, reason: str):
        self.path = path
        self.reason = reason
        super().__init__(f"設定ファイル '{path}' を読み込めません: {reason}")


class ParameterValidationError(DataError):
    """パラメータの検証に失敗した場合の例外"""

    def __init__(self, parameter_name: str, reason: str):
        self.parameter_name = parameter_name
        self.reason = reason
        super().__init__(
            f"パラメータ '{parameter_name}' の検証に失敗しました: {reason}"
        )
