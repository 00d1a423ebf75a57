class IntensityError(Exception):
    """ライブラリ共通の例外 (CLI の終了コードを保持)"""

    exit_code = 1

    def __init__(self, message: str, **context):
        super().__init__(message)
        self.message = message
        self.context = context


class InputError(IntensityError):
    """入力ファイル・設定・前提条件の違反"""

    exit_code = 2


class SimulationError(InputError):
    """シミュレーション入力の違反 (負の強度など)"""


class EstimationError(IntensityError):
    """推定不能 (全バンド幅でマスク、特異行列、データ不足)"""

    exit_code = 4


class OptimizerError(IntensityError):
    """Nelder-Mead が収束しなかった"""

    exit_code = 5
