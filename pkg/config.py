import os
from typing import Dict, Any, List, Optional
from dotenv import load_dotenv

load_dotenv()


def _env_bool(name: str, default: bool = False) -> bool:
    value = os.getenv(name)
    if value is None:
        return default
    return value.strip().lower() in ("1", "true", "yes", "on")


def _env_int(name: str, default: int) -> int:
    value = os.getenv(name)
    if value is None:
        return default
    try:
        return int(value)
    except (TypeError, ValueError):
        return default


def _env_list(name: str, default: Optional[List[str]] = None) -> List[str]:
    value = os.getenv(name)
    if value is None:
        return list(default) if default else []
    return [item.strip() for item in value.split(',') if item.strip()]


class Config:
    """Runtime settings for operator analysis, closure and search runs."""

    # Parallelism
    THREADS = _env_int("ALUSAFE_THREADS", os.cpu_count() or 1)
    THREADS_RAW = os.getenv("ALUSAFE_THREADS")

    # Sampled modes
    DEFAULT_SEED = _env_int("ALUSAFE_SEED", 1729)
    SAMPLE_COUNT = _env_int("ALUSAFE_SAMPLES", 1_000_000)

    # Exhaustive / sampled cutoffs
    EXHAUSTIVE_ODD_BITS = _env_int("ALUSAFE_EXHAUSTIVE_ODD_BITS", 30)
    EXHAUSTIVE_ASSIGNMENT_BITS = _env_int("ALUSAFE_EXHAUSTIVE_ASSIGNMENT_BITS", 20)

    # Vectorized work chunks
    CHUNK_ELEMENTS = _env_int("ALUSAFE_CHUNK_ELEMENTS", 1 << 24)

    # Closure and search budgets
    CLOSURE_MAX_MEMBERS = _env_int("ALUSAFE_CLOSURE_MAX_MEMBERS", 1 << 21)
    CLOSURE_MAX_TUPLES = _env_int("ALUSAFE_CLOSURE_MAX_TUPLES", 2_000_000_000)
    SEARCH_MAX_CANDIDATES = _env_int("ALUSAFE_SEARCH_MAX_CANDIDATES", 2_000_000_000)
    DERIVED_GENERATOR_MAX_NODES = _env_int("ALUSAFE_DERIVED_GENERATOR_MAX_NODES", 3)

    # Streaming brute-force counter
    BRUTE_BLOCK = _env_int("ALUSAFE_BRUTE_BLOCK", 1 << 24)

    # Logging
    LOG_LEVEL = os.getenv("ALUSAFE_LOG_LEVEL", "WARNING")
    LOG_TO_FILE = _env_bool("ALUSAFE_LOG_TO_FILE", False)
    LOG_DIR = os.getenv("ALUSAFE_LOG_DIR", "logs")
    QUIET_LOGGERS = _env_list("ALUSAFE_QUIET_LOGGERS", ["hypothesis", "asyncio"])

    @classmethod
    def validate(cls) -> Dict[str, Any]:
        """Validate configuration values."""
        errors = []
        warnings = []

        if cls.THREADS_RAW is not None:
            try:
                if int(cls.THREADS_RAW) < 1:
                    errors.append("ALUSAFE_THREADS must be an integer >= 1")
            except ValueError:
                errors.append(f"ALUSAFE_THREADS is not an integer: {cls.THREADS_RAW!r}")
        elif cls.THREADS < 1:
            errors.append("ALUSAFE_THREADS must be an integer >= 1")

        if cls.SAMPLE_COUNT < 1:
            errors.append("ALUSAFE_SAMPLES must be positive")
        if cls.CHUNK_ELEMENTS < 1024:
            errors.append("ALUSAFE_CHUNK_ELEMENTS must be at least 1024")
        if cls.BRUTE_BLOCK < 1:
            errors.append("ALUSAFE_BRUTE_BLOCK must be positive")

        if cls.EXHAUSTIVE_ODD_BITS > 34:
            warnings.append("ALUSAFE_EXHAUSTIVE_ODD_BITS above 34 makes exhaustive analysis very slow.")
        if cls.EXHAUSTIVE_ASSIGNMENT_BITS > 24:
            warnings.append("ALUSAFE_EXHAUSTIVE_ASSIGNMENT_BITS above 24 makes constant checks very slow.")
        if cls.SAMPLE_COUNT < 10_000:
            warnings.append("ALUSAFE_SAMPLES is small; sampled verdicts carry little confidence.")

        return {
            "errors": errors,
            "warnings": warnings,
            "valid": len(errors) == 0,
        }

    def thread_count(self) -> int:
        return max(1, int(self.THREADS))
