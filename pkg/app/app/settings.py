"""
Django settings for the hctx project.

Only the pieces the command-line pipeline needs are configured: the run
registry database, logging, and the artifact locations. Every value can be
overridden from the environment.
"""

from pathlib import Path
import os

from dotenv import load_dotenv

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# a .env next to the repository root is optional
load_dotenv(BASE_DIR.parent / ".env")

SECRET_KEY = os.environ.get("SECRET_KEY", "changeme")

DEBUG = bool(int(os.environ.get("DEBUG", 0)))

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    "core",
    "pipeline",
]

DATABASES = {
    "default": {
        "ENGINE": "django.db.backends.sqlite3",
        "NAME": os.environ.get("HCTX_DB_PATH", BASE_DIR / "db.sqlite3"),
    }
}

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"

TIME_ZONE = "UTC"

USE_TZ = True


# Artifacts: checkpoints, metrics logs, images

HCTX_OUTPUT_DIR = Path(
    os.environ.get("HCTX_OUTPUT_DIR", BASE_DIR.parent / "runs")
)
HCTX_DATA_DIR = os.environ.get("HCTX_DATA_DIR", "")

# behavioural tests that train a model end to end take minutes
HCTX_RUN_SLOW = bool(int(os.environ.get("HCTX_RUN_SLOW", 0)))


LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {
            "format": "%(asctime)s %(levelname)s %(name)s: %(message)s",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "plain",
        },
    },
    "root": {
        "handlers": ["console"],
        "level": os.environ.get("HCTX_LOG_LEVEL", "INFO"),
    },
}
