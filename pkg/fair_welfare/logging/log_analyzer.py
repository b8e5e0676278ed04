import json
import os
from collections import Counter
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd


class LogAnalyzer:
    """ログ分析ユーティリティ"""

    def __init__(self, output_dir: str):
        """初期化

        Args:
            output_dir (str): ログファイルのあるディレクトリ
        """
        self.output_dir = output_dir
        self.structured_log = os.path.join(output_dir, "solve_log.jsonl")

    def get_entries(self, phase: Optional[str] = None) -> List[Dict[str, Any]]:
        """JSONL の記録を取得（phase を指定すると絞り込む）"""
        if not os.path.exists(self.structured_log):
            return []
        entries = []
        with open(self.structured_log, "r", encoding="utf-8") as f:
            for line in f:
                if not line.strip():
                    continue
                entry = json.loads(line)
                if phase is None or entry.get("phase") == phase:
                    entries.append(entry)
        return entries

    def summarize_solves(self) -> Dict[str, Any]:
        """制約付き学習の記録の集計"""
        solves = self.get_entries("solve")
        failures = self.get_entries("failure")
        statuses = Counter(entry["data"]["result"]["status"] for entry in solves)
        iterations = [entry["data"]["result"]["iterations"] for entry in solves]
        gradient_norms = [entry["data"]["result"]["inner_gradient_norm"] for entry in solves]
        return {
            "total_solves": len(solves),
            "status_counts": dict(statuses),
            "failure_counts": dict(Counter(entry["data"]["error"] for entry in failures)),
            "mean_iterations": float(np.mean(iterations)) if iterations else None,
            "max_inner_gradient_norm": max(gradient_norms) if gradient_norms else None,
            "active_constraints": sum(1 for entry in solves if entry["data"]["result"]["active"]),
        }

    def analyze_sweep_trends(self, results_csv: str, tol: float = 1e-6) -> Dict[str, Any]:
        """α ごとに τ に沿った損失・Atkinson 指数・切片の単調性を確認

        損失と切片は非減少、Atkinson 指数は制約が効き始めた後で非増加であるべき。

        Args:
            results_csv (str): 結果表のパス
            tol (float): 許容する逆行の幅

        Returns:
            Dict[str, Any]: α ごとの違反の一覧と全体の判定
        """
        table = pd.read_csv(results_csv, float_precision="round_trip")
        table = table[table["status"] == "optimal"]
        table = table.groupby(["alpha", "tau"], as_index=False)[
            ["loss", "atkinson", "intercept", "lambda"]
        ].mean()

        report: Dict[str, Any] = {"alphas": {}, "monotone": True}
        for alpha, rows in table.groupby("alpha"):
            rows = rows.sort_values("tau")
            violations = []
            for column, direction in (("loss", 1), ("intercept", 1), ("atkinson", -1)):
                values = rows[column].to_numpy(dtype=float)
                taus = rows["tau"].to_numpy(dtype=float)
                if column == "atkinson":
                    active = rows["lambda"].to_numpy(dtype=float) > 0
                    values, taus = values[active], taus[active]
                steps = direction * np.diff(values)
                for position in np.flatnonzero(steps < -tol):
                    violations.append(
                        {
                            "column": column,
                            "tau_from": float(taus[position]),
                            "tau_to": float(taus[position + 1]),
                            "change": float(np.diff(values)[position]),
                        }
                    )
            report["alphas"][float(alpha)] = violations
            if violations:
                report["monotone"] = False
        return report
