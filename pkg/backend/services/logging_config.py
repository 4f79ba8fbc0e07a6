"""
Logging setup shared by the CLI and the Flask app: rotating file + stream,
every record tagged with the id of the run (CLI invocation or HTTP request)
"""
import os
import sys
import logging
import uuid
from logging.handlers import RotatingFileHandler
from typing import Callable, Optional

LOG_FORMAT = '%(asctime)s %(levelname)s [%(run_id)s] %(name)s: %(message)s'


class RunIdFilter(logging.Filter):
    def __init__(self, run_id_getter: Callable[[], str]):
        super().__init__()
        self._get = run_id_getter

    def filter(self, record):
        try:
            record.run_id = self._get() or '-'
        except Exception:
            record.run_id = '-'
        return True


def new_run_id() -> str:
    return str(uuid.uuid4())


def configure_logging(run_id_getter: Optional[Callable[[], str]] = None,
                      level: Optional[str] = None,
                      log_file: Optional[str] = None,
                      stream=None) -> logging.Logger:
    """Install the rotating-file and stream handlers on the root logger"""
    if run_id_getter is None:
        run_id = new_run_id()
        run_id_getter = lambda: run_id

    level_name = (level or os.getenv('LOG_LEVEL', 'INFO')).upper()
    log_level = getattr(logging, level_name, logging.INFO)
    log_file = log_file if log_file is not None else os.getenv('LOG_FILE', 'permkit.log')

    formatter = logging.Formatter(LOG_FORMAT)
    run_filter = RunIdFilter(run_id_getter)
    handlers = []

    if log_file:
        rotating = RotatingFileHandler(log_file, maxBytes=5_000_000, backupCount=3, encoding='utf-8')
        rotating.setLevel(log_level)
        rotating.setFormatter(formatter)
        rotating.addFilter(run_filter)
        handlers.append(rotating)

    # stderr keeps stdout free for reports
    console = logging.StreamHandler(stream or sys.stderr)
    console.setLevel(log_level)
    console.setFormatter(formatter)
    console.addFilter(run_filter)
    handlers.append(console)

    root_logger = logging.getLogger()
    root_logger.setLevel(log_level)
    root_logger.handlers = handlers
    return root_logger
