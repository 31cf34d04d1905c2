import sys

from loguru import logger

LOG_FORMAT = (
    "{time:YYYY-MM-DD HH:mm:ss.SSS} | [{level}] | {name}:{function}:{line} - {message}"
)


def configure_logging(level: str = "INFO"):
    """(Re-)install the single stderr sink with square brackets around the level."""
    logger.remove()
    logger.add(sys.stderr, format=LOG_FORMAT, level=level)
    return logger


configure_logging()
