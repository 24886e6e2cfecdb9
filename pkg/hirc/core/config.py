from functools import lru_cache

from pydantic_settings import BaseSettings, SettingsConfigDict

DEFAULT_PIPELINE = "constprop,cse,strength_reduce,narrow_precision,dedup_time_and_delays"


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="HIRC_", env_file=".env", extra="ignore")

    # Project Info
    PROJECT_NAME: str = "hirc"
    VERSION: str = "0.3.0"

    # Diagnostics / logging
    COLOR: bool = True
    LOG_LEVEL: str = "WARNING"

    # Backend
    PORT_LIMIT: int = 2
    RAM_STYLE: str = "auto"
    ASSERTION_MACRO: str = "HIRC_ASSERTIONS"

    # Optimizer
    DEFAULT_PASSES: str = DEFAULT_PIPELINE

    # Simulator
    MAX_CYCLES: int = 1_000_000

    @property
    def default_passes(self) -> list[str]:
        return [p.strip() for p in self.DEFAULT_PASSES.split(",") if p.strip()]


@lru_cache()
def get_settings() -> Settings:
    return Settings()
