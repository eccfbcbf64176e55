"""Logging setup for the command-line entry point.

Library modules only create loggers with ``logging.getLogger(__name__)``;
handlers are installed here, once, by the CLI.
"""

import logging
import sys

_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"


def configure_logging(verbosity: int = 0) -> None:
    """Route txtrec log records to stderr.

    Args:
        verbosity: 0 for warnings only, 1 for info, 2 or more for debug.
    """
    if verbosity >= 2:
        level = logging.DEBUG
    elif verbosity == 1:
        level = logging.INFO
    else:
        level = logging.WARNING

    root = logging.getLogger("txtrec")
    root.setLevel(level)
    ours = [h for h in root.handlers if getattr(h, "_txtrec", False)]
    for existing in ours:
        # stderr may have been replaced since the last call
        existing.setStream(sys.stderr)  # type: ignore[attr-defined]
    if not ours:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter(_FORMAT))
        handler._txtrec = True  # type: ignore[attr-defined]
        root.addHandler(handler)
