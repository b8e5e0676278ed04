import json
import logging

import numpy as np
import pandas as pd
import pytest

from fair_welfare.core.exceptions import NonConvergence
from fair_welfare.logging.log_analyzer import LogAnalyzer
from fair_welfare.logging.log_manager import LogManager
from fair_welfare.logging.logger import setup_logging
from fair_welfare.models.data_models import (
    RESULTS_COLUMNS,
    LinearModel,
    MechanismResult,
    SolveResult,
    SolveStatus,
)


def solve_result(status=SolveStatus.OPTIMAL, iterations=5, gradient_norm=1e-9, active=True):
    return SolveResult(
        model=LinearModel(np.array([1.0, 0.5])),
        lam=2.0 if active else 0.0,
        constraint_value=1.0,
        active=active,
        status=status,
        iterations=iterations,
        inner_gradient_norm=gradient_norm,
        loss=0.25,
    )


class TestSetupLogging:
    def test_writes_log_file(self, tmp_path):
        output_dir = tmp_path / "out"
        setup_logging(str(output_dir), "debug")
        logging.getLogger("fair_welfare.test").debug("記録テスト")
        for handler in logging.getLogger().handlers:
            handler.flush()
        assert logging.getLogger().level == logging.DEBUG
        assert "記録テスト" in (output_dir / "fair_welfare.log").read_text(encoding="utf-8")

    def test_without_file(self, tmp_path):
        setup_logging(str(tmp_path / "out"), logging.WARNING, log_file=False)
        assert not (tmp_path / "out").exists()
        assert logging.getLogger().level == logging.WARNING


class TestLogManager:
    def test_appends_json_lines(self, tmp_path):
        manager = LogManager(str(tmp_path / "logs"))
        manager.log_solve({"alpha": 0.5, "tau": 1.0, "fold": 0}, solve_result())
        manager.log_failure({"alpha": 0.5, "tau": 2.0, "fold": 0}, NonConvergence(10, 1e-3))

        lines = (tmp_path / "logs" / "solve_log.jsonl").read_text(encoding="utf-8").splitlines()
        assert len(lines) == 2
        first, second = (json.loads(line) for line in lines)
        assert first["phase"] == "solve"
        assert first["data"]["result"]["lambda"] == 2.0
        assert first["data"]["result"]["status"] == "optimal"
        assert second["phase"] == "failure"
        assert second["data"]["error"] == "NonConvergence"

    def test_mechanism_entry(self, tmp_path):
        manager = LogManager(str(tmp_path))
        result = MechanismResult(
            model=LinearModel(np.array([0.0, 1.0])),
            added_constraints=3,
            max_violation=0.0,
            average_violation=0.0,
            status=SolveStatus.OPTIMAL,
            details={"delta": 0.1},
        )
        manager.log_mechanism("dwork_delta", result)
        (entry,) = LogAnalyzer(str(tmp_path)).get_entries("mechanism")
        assert entry["data"]["kind"] == "dwork_delta"
        assert entry["data"]["result"]["added_constraints"] == 3


class TestLogAnalyzer:
    def test_no_log(self, tmp_path):
        analyzer = LogAnalyzer(str(tmp_path))
        assert analyzer.get_entries() == []
        summary = analyzer.summarize_solves()
        assert summary["total_solves"] == 0
        assert summary["mean_iterations"] is None

    def test_summarize(self, tmp_path):
        manager = LogManager(str(tmp_path))
        manager.log_solve({"fold": 0}, solve_result(iterations=4, gradient_norm=1e-9))
        manager.log_solve({"fold": 1}, solve_result(iterations=8, gradient_norm=1e-7, active=False))
        manager.log_solve({"fold": 2}, solve_result(SolveStatus.MAX_ITER, iterations=6))
        manager.log_failure({"fold": 3}, NonConvergence(10, 1e-3))

        summary = LogAnalyzer(str(tmp_path)).summarize_solves()
        assert summary["total_solves"] == 3
        assert summary["status_counts"] == {"optimal": 2, "max_iter": 1}
        assert summary["failure_counts"] == {"NonConvergence": 1}
        assert summary["mean_iterations"] == pytest.approx(6.0)
        assert summary["max_inner_gradient_norm"] == pytest.approx(1e-7)
        assert summary["active_constraints"] == 2

    @staticmethod
    def write_results(path, rows):
        records = []
        for alpha, tau, loss, atkinson, intercept, lam, status in rows:
            record = {column: None for column in RESULTS_COLUMNS}
            record.update(
                schema_version=1, alpha=alpha, tau=tau, fold=0, loss=loss, atkinson=atkinson,
                intercept=intercept, status=status,
            )
            record["lambda"] = lam
            records.append(record)
        pd.DataFrame(records, columns=list(RESULTS_COLUMNS)).to_csv(path, index=False)

    def test_monotone_sweep(self, tmp_path):
        path = tmp_path / "results.csv"
        self.write_results(
            path,
            [
                (0.5, 0.5, 0.10, 0.30, 1.0, 0.0, "optimal"),
                # 制約が効く前の Atkinson 指数は比較しない
                (0.5, 0.7, 0.10, 0.10, 1.0, 0.0, "optimal"),
                (0.5, 1.0, 0.12, 0.20, 1.2, 0.5, "optimal"),
                (0.5, 2.0, 0.30, 0.05, 1.8, 3.0, "optimal"),
                (0.5, 4.0, 0.01, 0.90, 0.0, 0.0, "infeasible"),
            ],
        )
        report = LogAnalyzer(str(tmp_path)).analyze_sweep_trends(str(path))
        assert report["monotone"]
        assert report["alphas"] == {0.5: []}

    def test_detects_violation(self, tmp_path):
        path = tmp_path / "results.csv"
        self.write_results(
            path,
            [
                (0.5, 1.0, 0.12, 0.20, 1.2, 0.5, "optimal"),
                (0.5, 2.0, 0.30, 0.05, 1.8, 3.0, "optimal"),
                (0.8, 1.0, 0.20, 0.10, 1.5, 1.0, "optimal"),
                (0.8, 2.0, 0.15, 0.05, 1.9, 2.0, "optimal"),
            ],
        )
        report = LogAnalyzer(str(tmp_path)).analyze_sweep_trends(str(path))
        assert not report["monotone"]
        assert report["alphas"][0.5] == []
        (violation,) = report["alphas"][0.8]
        assert violation["column"] == "loss"
        assert violation["tau_from"] == 1.0
        assert violation["change"] == pytest.approx(-0.05)
