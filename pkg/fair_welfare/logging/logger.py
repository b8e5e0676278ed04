import logging
import os
import sys
from typing import Union


def setup_logging(
    output_dir: str, log_level: Union[int, str] = logging.INFO, log_file: bool = True
) -> None:
    """ロギングの初期設定

    標準出力はレポートの行に使うため、ログは標準エラー出力に書く。

    Args:
        output_dir (str): ログファイル出力ディレクトリ
        log_level (Union[int, str]): ログレベル（デフォルト: logging.INFO）
        log_file (bool): fair_welfare.log にも書き出すかどうか
    """
    if isinstance(log_level, str):
        log_level = logging.getLevelName(log_level.upper())

    handlers = [logging.StreamHandler(sys.stderr)]
    if log_file:
        if not os.path.exists(output_dir):
            os.makedirs(output_dir)
        handlers.append(
            logging.FileHandler(os.path.join(output_dir, "fair_welfare.log"), encoding="utf-8")
        )

    logging.basicConfig(
        level=log_level,
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        handlers=handlers,
        force=True,
    )
