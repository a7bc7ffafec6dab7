import logging
import zlib
from logging.handlers import RotatingFileHandler
from pathlib import Path

import numpy as np


LOGGER_NAME = "vgdp"
DEFAULT_LOG_FILE = "logs/vgdp.log"


def setup_logging(settings, root: Path = None) -> logging.Logger:
    """Configure and return the `vgdp` logger: rotating run log + console.

    A relative `logging.file` is taken from `root` (the working directory by
    default). Calling again with a different file moves the handlers there.
    """
    log_cfg = getattr(settings, "logging", None) or {}
    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(getattr(logging, log_cfg.get("level", "INFO")))

    log_file = Path(log_cfg.get("file", DEFAULT_LOG_FILE))
    if not log_file.is_absolute() and root is not None:
        log_file = Path(root) / log_file
    log_file = log_file.resolve()

    current = [h for h in logger.handlers if isinstance(h, RotatingFileHandler)]
    if current and all(Path(h.baseFilename) == log_file for h in current):
        return logger
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    log_file.parent.mkdir(parents=True, exist_ok=True)
    fh = RotatingFileHandler(
        log_file,
        maxBytes=log_cfg.get("max_bytes", 5 * 1024 * 1024),
        backupCount=log_cfg.get("backup_count", 3),
    )
    # ablation cells log from pool workers
    fh.setFormatter(logging.Formatter("%(asctime)s [%(levelname)s] %(processName)s: %(message)s"))
    logger.addHandler(fh)

    ch = logging.StreamHandler()
    ch.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    logger.addHandler(ch)

    return logger


def stream_rng(master_seed: int, *stream_id) -> np.random.Generator:
    """Independent generator for (master_seed, stream_id...).

    Parallel workers derive their streams this way, so results do not depend
    on scheduling order.
    """
    return np.random.default_rng([int(master_seed), *(int(s) for s in stream_id)])


def stable_id(text: str) -> int:
    """Small deterministic integer for a string (python's hash() is salted)."""
    return zlib.crc32(text.encode("utf-8"))
