import sys

from fair_welfare.cli import main

if __name__ == "__main__":
    # 設定の読み込みからサブコマンドの実行まで cli に任せる
    sys.exit(main())
