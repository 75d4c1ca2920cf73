import os

from dotenv import load_dotenv
from pydantic import BaseModel, Field

# Load environment variables from .env file
load_dotenv()


def _env(name: str, default: str) -> str:
    return os.getenv(name, default)


class Settings(BaseModel):
    # Remote advisor (OpenAI-compatible chat completions)
    ADVISOR_URL: str = Field(default_factory=lambda: _env("ADVISOR_URL", ""))
    ADVISOR_KEY: str = Field(default_factory=lambda: _env("ADVISOR_KEY", ""))
    ADVISOR_MODEL: str = Field(
        default_factory=lambda: _env("ADVISOR_MODEL", "gpt-4o")
    )
    ADVISOR_FALLBACK_MODEL: str = Field(
        default_factory=lambda: _env("ADVISOR_FALLBACK_MODEL", "gpt-4o-mini")
    )
    ADVISOR_TIMEOUT: float = Field(
        default_factory=lambda: float(_env("ADVISOR_TIMEOUT", "2.0"))
    )
    ADVISOR_MAX_TOKENS: int = Field(
        default_factory=lambda: int(_env("ADVISOR_MAX_TOKENS", "256"))
    )
    ADVISOR_CACHE_TTL_HOURS: int = Field(
        default_factory=lambda: int(_env("ADVISOR_CACHE_TTL_HOURS", "24"))
    )

    # Policy bridge
    BRIDGE_HOST: str = Field(default_factory=lambda: _env("BRIDGE_HOST", "127.0.0.1"))
    BRIDGE_PORT: int = Field(default_factory=lambda: int(_env("BRIDGE_PORT", "8765")))
    BRIDGE_TIMEOUT: float = Field(
        default_factory=lambda: float(_env("BRIDGE_TIMEOUT", "5.0"))
    )
    BRIDGE_RETRIES: int = Field(default_factory=lambda: int(_env("BRIDGE_RETRIES", "3")))
    BRIDGE_MAX_CONNECTIONS: int = Field(
        default_factory=lambda: int(_env("BRIDGE_MAX_CONNECTIONS", "32"))
    )

    # Paths
    SCENARIO_DIR: str = Field(default_factory=lambda: _env("SCENARIO_DIR", ""))
    OUTPUT_DIR: str = Field(default_factory=lambda: _env("OUTPUT_DIR", "./results"))

    # Debug settings
    LOG_LEVEL: str = Field(default_factory=lambda: _env("LOG_LEVEL", "info").lower())


# Create a settings object
settings = Settings()
