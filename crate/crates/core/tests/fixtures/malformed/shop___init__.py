"""A toy shop used as an analysis fixture."""

__version__ = "1.4.2"

from shop.config import load_config
