"""
Settings

- Environment configuration via .env / .env.local
- Defaults for output location, logging and policy iteration
"""

import os
from dataclasses import dataclass
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()
load_dotenv(".env.local")


@dataclass(frozen=True)
class Settings:
    out_dir: Path = Path("results")
    log_level: str = "INFO"
    policy_tol: float = 1e-10
    policy_max_iters: int = 50
    workers: int = 1
    debug: bool = False


def get_settings() -> Settings:
    """
    Read settings from the environment.

    Returns:
        Settings with PCPT_* overrides applied
    """
    return Settings(
        out_dir=Path(os.getenv("PCPT_OUT_DIR", "results")),
        log_level=os.getenv("PCPT_LOG_LEVEL", "INFO").upper(),
        policy_tol=float(os.getenv("PCPT_POLICY_TOL", "1e-10")),
        policy_max_iters=int(os.getenv("PCPT_POLICY_MAX_ITERS", "50")),
        workers=max(1, int(os.getenv("PCPT_WORKERS", "1"))),
        debug=os.getenv("PCPT_DEBUG", "").lower() in ("1", "true", "yes"),
    )
