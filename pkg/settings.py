"""Общие настройки для приложения."""

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Конфиг с переменными окружения."""

    LOG_LEVEL: str = "INFO"

    # первое измерение после дефицита мощности, с
    MEASUREMENT_DELAY_S: float = 0.4

    RK4_SUBSTEPS: int = 4
    RIDGE: float = 1e-8
    # допуск на спектральный радиус A сверх единицы
    SPECTRAL_RADIUS_TOL: float = 1e-3

    DARE_TOL: float = 1e-10
    DARE_MAX_ITER: int = 100_000
    QP_MAX_ITER: int = 500

    DATASET_MAX_RETRIES: int = 5
    DEFAULT_JOBS: int = 1

    CSV_FLOAT_FORMAT: str = "%.17g"

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        env_nested_delimiter="__",
        extra="ignore",  # игнорировать лишние переменные в .env
    )


settings = Settings()
