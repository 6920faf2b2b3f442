from dotenv import load_dotenv
import logging
import os
import sys

load_dotenv()

LOG_LEVELS = {
    'error': logging.ERROR,
    'info': logging.INFO,
    'debug': logging.DEBUG,
}

DEFAULT_HISTORY_DB = "scenegraph_runs.db"

_configured = False


def log_level_name() -> str:
    """Verbosity from SCENEGRAPH_LOG, falling back to 'info'"""
    return os.getenv('SCENEGRAPH_LOG', 'info').strip().lower()


def configure_logging(level_name: str = None) -> int:
    """Install a single stderr handler on the root logger; returns the level used"""
    global _configured
    name = (level_name or log_level_name()).lower()
    level = LOG_LEVELS.get(name)
    unknown = level is None
    if unknown:
        level = logging.INFO

    root = logging.getLogger()
    if not _configured:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
        root.addHandler(handler)
        _configured = True
    root.setLevel(level)

    if unknown:
        logging.getLogger(__name__).warning("Unknown SCENEGRAPH_LOG value %r, using 'info'", name)
    return level


def history_db_path():
    """Path of the run-history database, or None when recording is disabled"""
    path = os.getenv('SCENEGRAPH_DB', DEFAULT_HISTORY_DB).strip()
    if path.lower() == 'off' or not path:
        return None
    return path


def slow_tests_enabled() -> bool:
    return os.getenv('SCENEGRAPH_SLOW', '0').strip() not in ('', '0', 'false', 'no')
