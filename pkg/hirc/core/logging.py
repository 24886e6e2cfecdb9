import logging

FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def setup_logging(level) -> None:
    """Attach one stream handler to the package logger.

    Calling it twice only updates the level.
    """
    logger = logging.getLogger("hirc")
    if isinstance(level, str):
        level = logging.getLevelName(level.upper())
    if not any(getattr(h, "_hirc", False) for h in logger.handlers):
        ch = logging.StreamHandler()
        ch.setFormatter(logging.Formatter(FORMAT))
        ch._hirc = True
        logger.addHandler(ch)
    logger.setLevel(level)
    logger.debug("Setup logging at level %s.", logging.getLevelName(level))
