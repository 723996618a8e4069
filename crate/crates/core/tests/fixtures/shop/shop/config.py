import os
import json

DEFAULTS = {"currency": "EUR", "tax_rate": 0.2, "free_shipping_over": 50}


def load_config(path=None):
    # Environment wins over the file.
    cfg = dict(DEFAULTS)
    if path and os.path.exists(path):
        with open(path) as fh:
            cfg.update(json.load(fh))
    for key in list(cfg):
        env = os.environ.get("SHOP_" + key.upper())
        if env is not None:
            cfg[key] = coerce(env, cfg[key])
    return cfg


def coerce(text, like):
    if isinstance(like, bool):
        return text.lower() in ("1", "true", "yes")
    if isinstance(like, int):
        return int(text)
    if isinstance(like, float):
        return float(text)
    return text
