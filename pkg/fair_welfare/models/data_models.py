import math
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime
from enum import Enum, IntEnum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.exceptions import (
    EmptyProfile,
    LengthMismatch,
    NonPositiveBenefit,
    ParameterValidationError,
)

SCHEMA_VERSION = 1


def _frozen_array(values: Any, dtype: Any = float) -> np.ndarray:
    """読み取り専用の numpy 配列を作成"""
    array = np.array(values, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


class LabelDomain(str, Enum):
    """ラベルの定義域"""

    BINARY01 = "binary01"
    BINARY_PM1 = "binaryPM1"
    CONTINUOUS = "continuous"


class Task(str, Enum):
    """学習タスクの種類"""

    REGRESSION = "regression"
    CLASSIFICATION = "classification"


class WelfareConvention(str, Enum):
    """厚生の集計方法（平均 U_D / 総和 W_α）"""

    MEAN = "mean"
    SUM = "sum"


class DistanceMode(str, Enum):
    """Dwork 指標で使う距離"""

    NORMALIZED_EUCLIDEAN = "normalized_euclidean"
    LABEL_DISTANCE = "label_distance"


class SolveStatus(str, Enum):
    """ソルバーの終了状態"""

    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITER = "max_iter"


class Ordering(IntEnum):
    """プロファイル同士の比較結果"""

    LESS = -1
    EQUAL = 0
    GREATER = 1


class MeasureKind(str, Enum):
    """モデル順位付けに使う尺度"""

    WELFARE = "welfare"
    ATKINSON = "atkinson"
    GE = "ge"


class ErrorRateKind(str, Enum):
    FPR = "fpr"
    FNR = "fnr"


class ResidualSign(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"


class MechanismKind(str, Enum):
    """公平性メカニズムの種類"""

    DWORK_DELTA = "dwork_delta"
    EPSILON_NET = "epsilon_net"
    SPEICHER = "speicher"


# --- 便益 -----------------------------------------------------------------


@dataclass(frozen=True)
class BenefitSpec:
    """予測ラベルに線形な便益関数 b(y, ŷ) = c_y ŷ + d_y

    回帰（CONTINUOUS）では係数を持たず、評価時に c=1, d=1-y を使う
    """

    coefficients: Dict[float, Tuple[float, float]]
    label_domain: LabelDomain
    floor: Optional[float] = None

    def __post_init__(self):
        if self.floor is not None and not self.floor > 0:
            raise ParameterValidationError("floor", "正の値である必要があります")
        if self.label_domain != LabelDomain.CONTINUOUS and not self.coefficients:
            raise ParameterValidationError(
                "coefficients", "二値ラベルの便益関数には係数が必要です"
            )

    @classmethod
    def regression(cls, floor: Optional[float] = None) -> "BenefitSpec":
        """回帰の既定便益 b(y, ŷ) = ŷ - y + 1"""
        return cls(coefficients={}, label_domain=LabelDomain.CONTINUOUS, floor=floor)

    def with_floor(self, floor: Optional[float]) -> "BenefitSpec":
        """下限 ε_b を差し替えたコピーを返す"""
        return replace(self, floor=floor)

    def to_dict(self) -> Dict[str, Any]:
        """辞書形式に変換"""
        return {
            "label_domain": self.label_domain.value,
            "coefficients": {
                str(label): [float(c), float(d)]
                for label, (c, d) in sorted(self.coefficients.items())
            },
            "floor": self.floor,
        }


@dataclass(frozen=True, eq=False)
class BenefitProfile:
    """正の便益ベクトル b = (b_1, ..., b_n) とその平均 μ"""

    values: np.ndarray
    mean: float

    def __post_init__(self):
        values = _frozen_array(self.values)
        object.__setattr__(self, "values", values)
        if values.ndim != 1 or values.size == 0:
            raise EmptyProfile()
        bad = np.flatnonzero(~(values > 0))
        if bad.size:
            raise NonPositiveBenefit(float(values[bad[0]]), int(bad[0]))
        recomputed = math.fsum(values.tolist()) / values.size
        if abs(recomputed - self.mean) > 1e-12 * max(1.0, abs(recomputed)):
            raise ParameterValidationError(
                "mean", f"再計算した平均 {recomputed!r} と一致しません"
            )

    @classmethod
    def from_values(cls, values: Sequence[float]) -> "BenefitProfile":
        """値から平均を計算してプロファイルを作成"""
        array = np.asarray(values, dtype=float)
        if array.ndim != 1 or array.size == 0:
            raise EmptyProfile()
        return cls(values=array, mean=math.fsum(array.tolist()) / array.size)

    def __len__(self) -> int:
        return int(self.values.size)

    def scaled(self, factor: float) -> "BenefitProfile":
        """全員の便益を factor 倍したプロファイル"""
        return BenefitProfile.from_values(self.values * factor)

    def to_dict(self) -> Dict[str, Any]:
        """辞書形式に変換"""
        return {"values": self.values.tolist(), "mean": self.mean}


@dataclass(frozen=True)
class BinaryBenefitTable:
    """(y, ŷ) の4通りに対する便益の表"""

    b00: float
    b01: float
    b10: float
    b11: float

    def ordering_holds(self) -> bool:
        """b̄_10 < b̄_00 <= b̄_11 < b̄_01 を満たすか"""
        return self.b10 < self.b00 <= self.b11 < self.b01

    def to_dict(self) -> Dict[str, Any]:
        """辞書形式に変換"""
        return asdict(self)


# --- 厚生 -----------------------------------------------------------------


@dataclass(frozen=True)
class WelfareParams:
    """CRRA 効用のリスクパラメータと集計方法"""

    alpha: float
    convention: WelfareConvention = WelfareConvention.MEAN

    def __post_init__(self):
        if not math.isfinite(self.alpha):
            raise ParameterValidationError("alpha", "有限の値である必要があります")


@dataclass(frozen=True)
class InequalityParams:
    """Atkinson 指数と一般化エントロピーのパラメータ"""

    beta: float
    ge_alpha: float = 2.0

    def __post_init__(self):
        if not self.beta >= 0:
            raise ParameterValidationError("beta", "0 以上である必要があります")


@dataclass(frozen=True)
class RankingMeasure:
    """順位付けに使う尺度とそのパラメータ"""

    kind: MeasureKind
    parameter: float

    @property
    def label(self) -> str:
        return f"{self.kind.value}({self.parameter:g})"


@dataclass(frozen=True)
class RankedModel:
    """順位付けの結果1件"""

    name: str
    score: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


# --- 公平性指標 -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GroupAssignment:
    """2グループ G1/G2 への所属（0 → G1, 1 → G2）"""

    membership: np.ndarray

    def __post_init__(self):
        membership = _frozen_array(self.membership, dtype=np.int8)
        object.__setattr__(self, "membership", membership)
        if membership.ndim != 1 or not np.isin(membership, (0, 1)).all():
            raise ParameterValidationError(
                "membership", "グループ所属は 0/1 の1次元配列である必要があります"
            )

    @classmethod
    def from_values(cls, values: Sequence[Any]) -> "GroupAssignment":
        """0/1 または真偽値の列から作成"""
        array = np.asarray(values)
        if array.dtype == bool:
            return cls(array.astype(np.int8))
        numeric = array.astype(float)
        if not np.isin(numeric, (0.0, 1.0)).all():
            raise ParameterValidationError(
                "group", "グループ列は 0/1 のみを含む必要があります"
            )
        return cls(numeric.astype(np.int8))

    @property
    def counts(self) -> Tuple[int, int]:
        """(|G1|, |G2|)"""
        g2 = int(self.membership.sum())
        return int(self.membership.size) - g2, g2

    def mask(self, group: int) -> np.ndarray:
        """group（0 または 1）に所属するインスタンスのマスク"""
        return self.membership == group

    def swapped(self) -> "GroupAssignment":
        """G1 と G2 を入れ替えたコピー"""
        return GroupAssignment(1 - self.membership)

    def subset(self, indices: np.ndarray) -> "GroupAssignment":
        return GroupAssignment(self.membership[indices])

    def __len__(self) -> int:
        return int(self.membership.size)


@dataclass(frozen=True)
class DistanceSpec:
    """ペア距離の定義"""

    mode: DistanceMode
    block_cap: int = 10_000


@dataclass(frozen=True)
class MetricSpecs:
    """full_report に渡す便益・厚生・不平等・距離の設定一式"""

    benefit: BenefitSpec
    welfare: WelfareParams
    inequality: InequalityParams
    distance: DistanceSpec


@dataclass
class MetricsReport:
    """1つのモデルに対する指標一式"""

    loss: float
    accuracy: Optional[float]
    welfare: float
    atkinson: float
    ge: float
    dwork_violation: Optional[float]
    demographic_parity: Optional[float] = None
    fpr_diff: Optional[float] = None
    fnr_diff: Optional[float] = None
    mean_diff: Optional[float] = None
    pos_residual_diff: Optional[float] = None
    neg_residual_diff: Optional[float] = None
    flags: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        """結果表の1行として使えるフラットな辞書に変換"""
        record = asdict(self)
        record["flags"] = ";".join(self.flags)
        return record


# --- ソルバー ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LinearModel:
    """線形モデル θ（最後の成分が切片）"""

    weights: np.ndarray

    def __post_init__(self):
        weights = _frozen_array(self.weights)
        object.__setattr__(self, "weights", weights)
        if weights.ndim != 1 or weights.size == 0:
            raise ParameterValidationError("weights", "1次元の非空ベクトルである必要があります")
        if not np.isfinite(weights).all():
            raise ParameterValidationError("weights", "有限の値である必要があります")

    @property
    def k(self) -> int:
        return int(self.weights.size)

    @property
    def intercept(self) -> float:
        return float(self.weights[-1])

    def predict(self, features: np.ndarray) -> np.ndarray:
        """θ·x_i を計算"""
        features = np.asarray(features, dtype=float)
        if features.shape[1] != self.k:
            raise LengthMismatch("特徴量の次元", self.k, features.shape[1])
        return features @ self.weights

    def with_intercept_shift(self, shift: float) -> "LinearModel":
        """切片に shift を加えたモデル"""
        weights = self.weights.copy()
        weights[-1] += shift
        return LinearModel(weights)

    def to_dict(self) -> Dict[str, Any]:
        """辞書形式に変換"""
        return {"k": self.k, "weights": [float(w) for w in self.weights]}


@dataclass(frozen=True)
class ConstraintSpec:
    """厚生制約 (1/n) Σ u(b_i) >= τ の仕様"""

    alpha: float
    tau: float
    benefit: BenefitSpec
    scale_c: float = 5.0

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ParameterValidationError("alpha", "0 < α < 1 である必要があります")
        if not self.tau > 0:
            raise ParameterValidationError("tau", "正の値である必要があります")
        if not self.scale_c > 0:
            raise ParameterValidationError("scale_c", "正の値である必要があります")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "alpha": self.alpha,
            "tau": self.tau,
            "scale_c": self.scale_c,
            "benefit": self.benefit.to_dict(),
        }


@dataclass(frozen=True)
class SolverConfig:
    """ソルバーの許容誤差と反復上限"""

    tol_c: float = 1e-6
    tol_g: float = 1e-8
    lambda_max: float = 1e12
    max_outer: int = 200
    max_inner: int = 10_000
    benefit_floor: float = 1e-8
    restarts: int = 8
    seed: int = 0

    def __post_init__(self):
        for name in (
            "tol_c",
            "tol_g",
            "lambda_max",
            "max_outer",
            "max_inner",
            "benefit_floor",
            "restarts",
        ):
            if not getattr(self, name) > 0:
                raise ParameterValidationError(name, "正の値である必要があります")
        if self.seed < 0:
            raise ParameterValidationError("seed", "0 以上である必要があります")

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> "SolverConfig":
        """設定辞書から作成（未知のキーは無視、YAML の文字列表記の数値も受け付ける）"""
        integers = {"max_outer", "max_inner", "restarts", "seed"}
        known = {}
        for name in cls.__dataclass_fields__:
            if name not in values or values[name] is None:
                continue
            try:
                known[name] = int(values[name]) if name in integers else float(values[name])
            except (TypeError, ValueError) as e:
                raise ParameterValidationError(name, f"数値ではありません: {values[name]!r}") from e
        return cls(**known)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class MinimizeResult:
    """内側の平滑最小化の結果"""

    x: np.ndarray
    value: float
    gradient_norm: float
    iterations: int
    # 便益の下限 ε_b が効いている解（KKT 残差による証明の対象外）
    on_boundary: bool = False


@dataclass(frozen=True, eq=False)
class DualResult:
    """双対二分探索の結果"""

    x: np.ndarray
    lam: float
    constraint_value: float
    active: bool
    outer_iterations: int
    inner_iterations: int
    gradient_norm: float
    status: SolveStatus
    bracket: Tuple[float, float]
    on_boundary: bool = False


@dataclass(frozen=True)
class SolveResult:
    """制約付き学習の結果"""

    model: LinearModel
    lam: float
    constraint_value: float
    active: bool
    status: SolveStatus
    iterations: int
    inner_gradient_norm: float
    loss: float
    certified: bool = True

    def to_dict(self) -> Dict[str, Any]:
        """辞書形式に変換"""
        return {
            "model": self.model.to_dict(),
            "lambda": self.lam,
            "constraint_value": self.constraint_value,
            "active": self.active,
            "status": self.status.value,
            "iterations": self.iterations,
            "inner_gradient_norm": self.inner_gradient_norm,
            "loss": self.loss,
            "certified": self.certified,
        }


@dataclass(frozen=True)
class KKTResiduals:
    """KKT 条件の残差"""

    stationarity_norm: float
    primal_violation: float
    dual_feasibility: float
    complementary_slackness: float

    def max_residual(self) -> float:
        return max(
            self.stationarity_norm,
            self.primal_violation,
            self.dual_feasibility,
            self.complementary_slackness,
        )

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


# --- メカニズム -------------------------------------------------------------


@dataclass(frozen=True)
class PairConstraint:
    """ペア制約 |θ·x_i - θ·x_j| <= d(i, j)"""

    i: int
    j: int
    bound: float

    def __post_init__(self):
        if not self.i < self.j:
            raise ParameterValidationError("pair", f"i < j である必要があります: ({self.i}, {self.j})")
        if not self.bound >= 0:
            raise ParameterValidationError("bound", "0 以上である必要があります")


@dataclass(frozen=True)
class MechanismResult:
    """公平性メカニズムの結果"""

    model: LinearModel
    added_constraints: int
    max_violation: float
    average_violation: float
    status: SolveStatus
    details: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "model": self.model.to_dict(),
            "added_constraints": self.added_constraints,
            "max_violation": self.max_violation,
            "average_violation": self.average_violation,
            "status": self.status.value,
            "details": self.details,
        }


# --- データ ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Dataset:
    """同次座標の特徴量行列・ラベル・グループ所属"""

    features: np.ndarray
    labels: np.ndarray
    task: Task
    groups: Optional[GroupAssignment] = None
    column_names: Tuple[str, ...] = ()
    flags: Tuple[str, ...] = ()

    def __post_init__(self):
        features = _frozen_array(self.features)
        labels = _frozen_array(self.labels)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        if features.ndim != 2 or features.shape[0] == 0 or features.shape[1] == 0:
            raise ParameterValidationError("features", "n×k（n, k >= 1）の行列である必要があります")
        n, k = features.shape
        if labels.shape != (n,):
            raise LengthMismatch("ラベル", n, labels.size)
        if not np.isfinite(features).all():
            raise ParameterValidationError("features", "欠損値または非有限値を含みます")
        if not np.all(features[:, -1] == 1.0):
            raise ParameterValidationError("features", "最後の列は同次座標（すべて 1.0）である必要があります")
        if not np.isfinite(labels).all():
            raise ParameterValidationError("labels", "欠損値または非有限値を含みます")
        if self.task == Task.CLASSIFICATION and not np.isin(labels, (-1.0, 1.0)).all():
            raise ParameterValidationError("labels", "分類ラベルは -1 または +1 である必要があります")
        if self.groups is not None and len(self.groups) != n:
            raise LengthMismatch("グループ列", n, len(self.groups))
        if self.column_names and len(self.column_names) != k:
            raise LengthMismatch("列名", k, len(self.column_names))
        if not self.column_names:
            names = tuple(f"x{j}" for j in range(k - 1)) + ("intercept",)
            object.__setattr__(self, "column_names", names)

    @property
    def n(self) -> int:
        return int(self.features.shape[0])

    @property
    def k(self) -> int:
        return int(self.features.shape[1])

    def subset(self, indices: Sequence[int]) -> "Dataset":
        """指定した行だけを含むデータセット"""
        indices = np.asarray(indices, dtype=int)
        return Dataset(
            features=self.features[indices],
            labels=self.labels[indices],
            task=self.task,
            groups=self.groups.subset(indices) if self.groups is not None else None,
            column_names=self.column_names,
            flags=self.flags,
        )

    def with_flags(self, *flags: str) -> "Dataset":
        return replace(self, flags=self.flags + tuple(flags))


@dataclass(frozen=True)
class GroupRule:
    """生の列としきい値からグループを決める規則（値 > threshold → G2）"""

    column: str
    threshold: float


@dataclass(frozen=True)
class PreprocessConfig:
    """前処理の設定"""

    standardize: bool = True
    exempt_columns: Tuple[str, ...] = ()
    flip_labels: bool = False
    target_rescale: Optional[float] = None
    group_rule: Optional[GroupRule] = None

    def __post_init__(self):
        if self.target_rescale is not None and not self.target_rescale > 0:
            raise ParameterValidationError("target_rescale", "正の値である必要があります")


@dataclass(frozen=True)
class CsvSchema:
    """CSV 読み込みのスキーマ"""

    label_column: str
    task: Task
    group_column: Optional[str] = None
    feature_columns: Optional[Tuple[str, ...]] = None
    max_missing_fraction: Optional[float] = None
    drop_missing: bool = True


# --- 実験 -----------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """(α, τ) グリッド実験の設定"""

    task: Task
    benefit: BenefitSpec
    alphas: Tuple[float, ...]
    taus: Tuple[float, ...]
    solver: SolverConfig
    schema: Optional[CsvSchema]
    data_path: Optional[str]
    preprocess: Optional[PreprocessConfig]
    output_dir: str
    seed: int = 0
    scale_c: float = 5.0
    folds: int = 1
    jobs: Optional[int] = None
    max_retries: int = 2
    save_models: bool = False
    distance_block_cap: int = 10_000
    ge_alpha: float = 2.0
    atkinson_beta: Optional[float] = None
    welfare_convention: WelfareConvention = WelfareConvention.MEAN

    def __post_init__(self):
        if not self.alphas:
            raise ParameterValidationError("alphas", "空にできません")
        if not self.taus:
            raise ParameterValidationError("taus", "空にできません")
        for alpha in self.alphas:
            if not 0 < alpha < 1:
                raise ParameterValidationError("alphas", f"α={alpha} は (0, 1) の範囲外です")


RESULTS_COLUMNS = (
    "schema_version",
    "alpha",
    "tau",
    "fold",
    "loss",
    "accuracy",
    "welfare",
    "atkinson",
    "ge2",
    "dwork_violation",
    "demographic_parity",
    "fpr_diff",
    "fnr_diff",
    "mean_diff",
    "pos_residual_diff",
    "neg_residual_diff",
    "lambda",
    "intercept",
    "status",
)


@dataclass
class ResultsRow:
    """結果表の1行（(α, τ, fold) ごと）"""

    alpha: float
    tau: float
    fold: int
    status: str
    report: Optional[MetricsReport] = None
    lam: Optional[float] = None
    intercept: Optional[float] = None

    def sort_key(self) -> Tuple[float, float, int]:
        return (self.alpha, self.tau, self.fold)

    def to_dict(self) -> Dict[str, Any]:
        """RESULTS_COLUMNS の順に並んだ辞書に変換"""
        report = self.report
        record: Dict[str, Any] = {
            "schema_version": SCHEMA_VERSION,
            "alpha": self.alpha,
            "tau": self.tau,
            "fold": self.fold,
            "loss": report.loss if report else None,
            "accuracy": report.accuracy if report else None,
            "welfare": report.welfare if report else None,
            "atkinson": report.atkinson if report else None,
            "ge2": report.ge if report else None,
            "dwork_violation": report.dwork_violation if report else None,
            "demographic_parity": report.demographic_parity if report else None,
            "fpr_diff": report.fpr_diff if report else None,
            "fnr_diff": report.fnr_diff if report else None,
            "mean_diff": report.mean_diff if report else None,
            "pos_residual_diff": report.pos_residual_diff if report else None,
            "neg_residual_diff": report.neg_residual_diff if report else None,
            "lambda": self.lam,
            "intercept": self.intercept,
            "status": self.status,
        }
        return {column: record[column] for column in RESULTS_COLUMNS}


@dataclass
class SweepMetadata:
    """スイープの進行状況を表すデータクラス"""

    status: str
    completed_cells: int
    total_cells: int
    timestamp: datetime
    error_message: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        """辞書形式に変換"""
        return {
            "status": self.status,
            "completed_cells": self.completed_cells,
            "total_cells": self.total_cells,
            "progress": (
                100.0 * self.completed_cells / self.total_cells if self.total_cells else 0.0
            ),
            "timestamp": self.timestamp.isoformat() if self.timestamp else None,
            "error_message": self.error_message,
        }
