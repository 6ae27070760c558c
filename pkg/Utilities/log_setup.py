# Utilities/log_setup.py
import logging
from typing import Optional

from rich.console import Console
from rich.logging import RichHandler

_configured = False


def configure_logging(level: Optional[str] = None, console: Optional[Console] = None) -> None:
    """
    Install a single rich handler on the root logger.

    Args:
        level: Level name such as "INFO" or "DEBUG"; defaults to INFO
        console: Console to render into (stderr when omitted)
    """
    global _configured
    level_name = (level or "INFO").upper()
    root = logging.getLogger()
    root.setLevel(getattr(logging, level_name, logging.INFO))
    if _configured:
        return
    handler = RichHandler(
        console=console or Console(stderr=True),
        show_path=False,
        rich_tracebacks=True,
    )
    handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
    root.addHandler(handler)
    _configured = True
