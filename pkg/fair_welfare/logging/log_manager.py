import json
import logging
import os
import threading
from datetime import datetime
from typing import Any, Dict

from ..models.data_models import MechanismResult, SolveResult

logger = logging.getLogger(__name__)


class LogManager:
    """ソルバーの実行記録を JSONL で保存するクラス"""

    def __init__(self, output_dir: str):
        """初期化

        Args:
            output_dir (str): ログの出力ディレクトリ
        """
        self.output_dir = output_dir
        self._ensure_output_directory()
        self.structured_log_file = os.path.join(output_dir, "solve_log.jsonl")
        self._lock = threading.Lock()

    def _ensure_output_directory(self) -> None:
        """出力ディレクトリの確保"""
        if not os.path.exists(self.output_dir):
            os.makedirs(self.output_dir)
            logger.info(f"出力ディレクトリを作成しました: {self.output_dir}")

    def log_structured_data(self, phase: str, data: Dict[str, Any]) -> None:
        """構造化データの記録

        Args:
            phase (str): 処理フェーズ名
            data (Dict[str, Any]): 記録するデータ
        """
        log_entry = {
            "timestamp": datetime.now().isoformat(),
            "phase": phase,
            "data": data,
        }
        line = json.dumps(log_entry, ensure_ascii=False, default=str)
        with self._lock:
            with open(self.structured_log_file, "a", encoding="utf-8") as f:
                f.write(line)
                f.write("\n")

    def log_solve(self, cell: Dict[str, Any], result: SolveResult) -> None:
        """制約付き学習1回分の記録"""
        self.log_structured_data("solve", {"cell": cell, "result": result.to_dict()})

    def log_mechanism(self, kind: str, result: MechanismResult) -> None:
        """メカニズム実行の記録"""
        self.log_structured_data("mechanism", {"kind": kind, "result": result.to_dict()})

    def log_failure(self, cell: Dict[str, Any], error: Exception) -> None:
        self.log_structured_data(
            "failure",
            {"cell": cell, "error": type(error).__name__, "message": str(error)},
        )
