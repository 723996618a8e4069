import logging

_LOGGERS = {}


def get_logger(name):
    if name not in _LOGGERS:
        logger = logging.getLogger("shop." + name)
        logger.addHandler(logging.NullHandler())
        _LOGGERS[name] = logger
    return _LOGGERS[name]


def set_level(level):
    for logger in _LOGGERS.values():
        logger.setLevel(level)
