import logging
import os
import sys

_LOG_LEVEL = logging.INFO

_stdout_handler = logging.StreamHandler(sys.stdout)
_stdout_handler.setFormatter(logging.Formatter("%(asctime)s %(message)s"))
_stdout_handler.setLevel(logging.DEBUG)

_logger = logging.Logger('weedipp')
_logger.setLevel(_LOG_LEVEL)
_logger.addHandler(_stdout_handler)


def set_verbose(verbose: bool):
    """Switch the package logger between INFO and DEBUG"""
    _logger.setLevel(logging.DEBUG if verbose else _LOG_LEVEL)


def attach_log_file(log_dir: str) -> logging.FileHandler:
    """
    Add a file handler writing weedipp.log into log_dir, replacing any file handler attached by an
    earlier call. Experiments call this with their output directory so that each run keeps its own log.
    :param log_dir: An existing directory
    :return: The attached handler
    """
    for handler in list(_logger.handlers):
        if isinstance(handler, logging.FileHandler):
            _logger.removeHandler(handler)
            handler.close()

    file_handler = logging.FileHandler(os.path.join(log_dir, 'weedipp.log'))
    file_handler.setFormatter(logging.Formatter("%(asctime)s [weedipp.%(levelname)s] %(message)s"))
    file_handler.setLevel(logging.DEBUG)
    _logger.addHandler(file_handler)
    return file_handler
