import logging
import logging.config
import os

from settings.config import settings


def setup_logging(verbose: bool = False):
    """
    Sets up logging for the application using a configuration file.
    This ensures standardized logging across the entire application.
    """
    config_path = os.path.normpath(settings.logging_config)
    if os.path.exists(config_path):
        logging.config.fileConfig(config_path, disable_existing_loggers=False)
    else:
        logging.basicConfig(level=logging.INFO)
    if verbose:
        logging.getLogger().setLevel(logging.DEBUG)
        logging.getLogger("app").setLevel(logging.DEBUG)
