"""
Configuration management for the skill planning engine
Handles environment variables and repository-wide defaults
"""

from typing import Optional

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Engine settings with environment variable support"""

    model_config = SettingsConfigDict(
        env_prefix="AOS_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # ================================
    # LOGGING
    # ================================
    log_level: str = Field("INFO")
    log_format: str = Field("console")

    # ================================
    # MODEL DEFAULTS
    # ================================
    seed: int = Field(0)
    discount: float = Field(0.95)
    loop_cap: int = Field(10_000)

    # ================================
    # EXACT ENUMERATION
    # ================================
    eps: float = Field(1e-9)
    max_states: int = Field(100_000)
    oracle_tree_cap: int = Field(5_000_000)

    # ================================
    # BELIEF TRACKING
    # ================================
    particles: int = Field(1_000)
    retry_factor: int = Field(16)
    reinvigoration_floor: float = Field(0.05)
    reinvigorate: bool = Field(True)

    # ================================
    # PLANNER
    # ================================
    simulations: int = Field(5_000)
    max_depth: int = Field(20)
    uct_c: Optional[float] = Field(None)
    node_pool_cap: int = Field(1_000)
    tree_reuse: bool = Field(False)

    # ================================
    # EXECUTION
    # ================================
    step_cap: int = Field(30)
    wire_timeout_seconds: float = Field(30.0)
    trace_dir: str = Field("traces")

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        """Validate log level"""
        valid_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        if v.upper() not in valid_levels:
            raise ValueError(f"Invalid log level. Must be one of: {valid_levels}")
        return v.upper()

    @field_validator("log_format")
    @classmethod
    def validate_log_format(cls, v: str) -> str:
        if v.lower() not in ("json", "console"):
            raise ValueError("Invalid log format. Must be 'json' or 'console'")
        return v.lower()

    @field_validator("discount")
    @classmethod
    def validate_discount(cls, v: float) -> float:
        if not 0.0 < v <= 1.0:
            raise ValueError("discount must lie in (0, 1]")
        return v

    @field_validator("eps")
    @classmethod
    def validate_eps(cls, v: float) -> float:
        if not 0.0 <= v <= 1e-3:
            raise ValueError("eps must lie in [0, 1e-3]")
        return v

    @field_validator(
        "loop_cap", "max_states", "oracle_tree_cap", "particles", "retry_factor",
        "simulations", "max_depth", "node_pool_cap",
    )
    @classmethod
    def validate_positive(cls, v: int) -> int:
        if v < 1:
            raise ValueError("value must be >= 1")
        return v

    @field_validator("step_cap")
    @classmethod
    def validate_step_cap(cls, v: int) -> int:
        if v < 0:
            raise ValueError("step_cap must be >= 0")
        return v

    @field_validator("reinvigoration_floor")
    @classmethod
    def validate_floor(cls, v: float) -> float:
        if not 0.0 <= v <= 1.0:
            raise ValueError("reinvigoration_floor must lie in [0, 1]")
        return v

    def get_planner_config(self) -> dict:
        """Planner defaults as keyword arguments for PlannerConfig"""
        return {
            "simulations": self.simulations,
            "max_depth": self.max_depth,
            "uct_c": self.uct_c,
            "seed": self.seed,
            "node_pool_cap": self.node_pool_cap,
            "tree_reuse": self.tree_reuse,
        }

    def get_belief_config(self) -> dict:
        """Particle filter defaults"""
        return {
            "retry_factor": self.retry_factor,
            "floor": self.reinvigoration_floor,
            "reinvigorate": self.reinvigorate,
        }


# Global settings instance
settings = Settings()


def get_settings() -> Settings:
    """Get engine settings"""
    return settings


def load_settings_from_file(file_path: str) -> Settings:
    """Load settings from a specific file"""
    return Settings(_env_file=file_path)


def setup_logging(level: Optional[str] = None, log_format: Optional[str] = None):
    """Setup logging configuration based on settings"""
    import logging
    import sys

    import structlog

    level = (level or settings.log_level).upper()
    log_format = (log_format or settings.log_format).lower()

    logging.basicConfig(
        level=getattr(logging, level),
        stream=sys.stderr,
        format="%(message)s" if log_format == "json" else "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )

    processors = [
        structlog.stdlib.filter_by_level,
        structlog.stdlib.add_logger_name,
        structlog.stdlib.add_log_level,
        structlog.stdlib.PositionalArgumentsFormatter(),
        structlog.processors.TimeStamper(fmt="iso"),
        structlog.processors.StackInfoRenderer(),
        structlog.processors.format_exc_info,
    ]

    if log_format == "json":
        processors.append(structlog.processors.JSONRenderer())
    else:
        processors.append(structlog.dev.ConsoleRenderer())

    structlog.configure(
        processors=processors,
        wrapper_class=structlog.stdlib.BoundLogger,
        logger_factory=structlog.stdlib.LoggerFactory(),
        cache_logger_on_first_use=True,
    )


if __name__ == "__main__":
    print(f"Log level: {settings.log_level}")
    print(f"Seed: {settings.seed}")
    print(f"Discount default: {settings.discount}")
