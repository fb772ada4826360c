"""Process-level settings for Active Subset."""

import os
import logging
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# Directories
BASE_DIR = Path(__file__).parent.parent
OUTPUT_DIR = Path(os.getenv("ACTIVE_SUBSET_OUTPUT_DIR", BASE_DIR / "results"))

# Run defaults
DEFAULT_SEED = int(os.getenv("ACTIVE_SUBSET_DEFAULT_SEED", "0"))
DEFAULT_JOBS = int(os.getenv("ACTIVE_SUBSET_JOBS", "1"))

# Optional display names for class labels, comma-separated (e.g. "healthy,mild,severe")
CLASS_NAMES = tuple(n.strip() for n in os.getenv("ACTIVE_SUBSET_CLASS_NAMES", "").split(",") if n.strip())

# Logging
LOG_LEVEL_STR = os.getenv("LOG_LEVEL", "INFO")
LOG_LEVEL = getattr(logging, LOG_LEVEL_STR.upper(), logging.INFO)
LOG_FORMAT = os.getenv("LOG_FORMAT", "%(asctime)s - %(name)s - %(levelname)s - %(message)s")
LOG_FILE = os.getenv("LOG_FILE")


def configure_logging(level: Optional[int] = None, log_file: Optional[str] = LOG_FILE) -> None:
    """Install the package's log handlers.

    Logs go to standard error (and optionally a file); standard output is
    reserved for result tables.

    Args:
        level: Log level override (defaults to LOG_LEVEL).
        log_file: Optional path of an additional log file.
    """
    handlers = [logging.StreamHandler()]
    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file))

    logging.basicConfig(
        level=LOG_LEVEL if level is None else level,
        format=LOG_FORMAT,
        handlers=handlers,
        force=True,
    )
