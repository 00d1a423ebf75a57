import os
from pydantic_settings import BaseSettings, SettingsConfigDict
from typing import Optional, List


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_file=".env", case_sensitive=False)

    # 環境設定
    environment: str = "development"
    debug: bool = False

    # ログ設定
    log_level: str = "INFO"
    log_json: bool = False

    # 並列実行 (None = 全コア)
    threads: Optional[int] = None

    # 推定の既定値
    eval_grid_size: int = 512
    pd_tolerance: float = 1e-10
    quadrature_nodes: int = 2001
    default_alpha: float = 1.0
    observability_nu: float = 0.05

    # API設定
    api_title: str = "Cox Intensity API"
    api_version: str = "1.0.0"
    api_host: str = "localhost"
    api_port: int = 8000

    # CORS設定 - カンマ区切りの文字列として受け取り
    cors_origins_str: str = "http://localhost:3000,http://localhost:5173,http://localhost:8501"

    # CORS設定をリストに変換するプロパティ
    @property
    def cors_origins(self) -> List[str]:
        return [origin.strip() for origin in self.cors_origins_str.split(",")]

    # API ベースURL
    @property
    def api_base_url(self) -> str:
        return f"http://{self.api_host}:{self.api_port}"

    @property
    def worker_count(self) -> int:
        if self.threads is not None and self.threads > 0:
            return self.threads
        return os.cpu_count() or 1


class TestSettings(Settings):
    """テスト用設定"""

    environment: str = "testing"
    debug: bool = True
    log_level: str = "WARNING"

    # テストは決定的に単一スレッドで実行
    threads: Optional[int] = 1


# 設定インスタンス取得
def get_settings() -> Settings:
    env = os.getenv("ENVIRONMENT", "development")

    if env == "testing":
        return TestSettings()
    else:
        return Settings()


settings = get_settings()
