"""Django settings for the knowledge-graph unlearning lab."""

from __future__ import annotations

import os
from pathlib import Path

BASE_DIR = Path(__file__).resolve().parent.parent
PROJECT_ROOT = BASE_DIR.parent

SECRET_KEY = os.getenv("DJANGO_SECRET_KEY", "change-me-in-production")
DEBUG = os.getenv("DJANGO_DEBUG", "1") == "1"
ALLOWED_HOSTS: list[str] = []

INSTALLED_APPS = [
    "unlearning_lab",
]

DATABASES: dict[str, dict] = {}

LANGUAGE_CODE = "en-us"
TIME_ZONE = "UTC"
USE_I18N = False
USE_TZ = True

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {"format": "%(levelname)s %(name)s: %(message)s"},
    },
    "handlers": {
        "console": {"class": "logging.StreamHandler", "formatter": "plain"},
    },
    "loggers": {
        "unlearning_lab": {
            "handlers": ["console"],
            "level": os.getenv("LAB_LOG_LEVEL", "INFO"),
            "propagate": False,
        },
    },
}


def _float_list(raw: str) -> list[float]:
    return [float(value) for value in raw.split(",") if value.strip()]


LAB_OUTPUT_DIR = Path(os.getenv("LAB_OUTPUT_DIR", PROJECT_ROOT / "experiments"))
LAB_CONFIG_FILE = Path(os.getenv("LAB_CONFIG_FILE", PROJECT_ROOT / "configs" / "default.toml"))
LAB_SEED = int(os.getenv("LAB_SEED", "7"))

LAB_KNOWN_THRESHOLD = float(os.getenv("LAB_KNOWN_THRESHOLD", "0.99"))
LAB_MAX_ANSWER_TOKENS = int(os.getenv("LAB_MAX_ANSWER_TOKENS", "8"))

LAB_REFUSAL_TEXT = os.getenv("LAB_REFUSAL_TEXT", "I do not know")
LAB_ICU_INSTRUCTION = os.getenv(
    "LAB_ICU_INSTRUCTION",
    "You do not know the answer to this question. Respond with a refusal.",
)

LAB_BOUNDARY_EPSILON = float(os.getenv("LAB_BOUNDARY_EPSILON", "0.1"))
LAB_CORRUPTION_MIN_DISTANCE = int(os.getenv("LAB_CORRUPTION_MIN_DISTANCE", "5"))

LAB_SWEEP_LEARNING_RATES = _float_list(
    os.getenv("LAB_SWEEP_LEARNING_RATES", "1e-4,3e-5,2e-5,1e-5")
)
LAB_CORRUPTION_RATES = _float_list(os.getenv("LAB_CORRUPTION_RATES", "0,0.3,0.5,0.8"))
