import logging
from collections.abc import Sequence

logger = logging.getLogger(__name__)

LOG_LEVELS = {
    "info": (logging.INFO, "[.]"),
    "success": (logging.INFO, "[+]"),
    "warning": (logging.WARNING, "[!]"),
    "error": (logging.ERROR, "[x]"),
    "debug": (logging.DEBUG, "[•]"),
}


def log(msg: str, level: str = "info") -> None:
    lvl, prefix = LOG_LEVELS.get(level, (logging.INFO, "[.]"))
    logger.log(lvl, f"{prefix} {msg}")


def log_table(
    title: str, header: Sequence[str], rows: Sequence[Sequence[object]], level: str = "debug"
) -> None:
    """log a small convergence table, one line per row"""
    lvl, _ = LOG_LEVELS.get(level, (logging.DEBUG, "[•]"))
    if not logger.isEnabledFor(lvl):
        return
    log(f"{title}: " + " | ".join(header), level)
    for row in rows:
        cells = [f"{c:.6g}" if isinstance(c, float) else str(c) for c in row]
        log("  " + " | ".join(cells), level)
