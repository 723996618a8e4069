import threading

from shop.util.log import get_logger

log = get_logger("inventory")


class Inventory:
    """Stock levels per product key."""

    def __init__(self):
        self.levels = {}
        self.lock = threading.Lock()

    def restock(self, key, amount):
        with self.lock:
            self.levels[key] = self.levels.get(key, 0) + amount

    def reserve(self, key, amount):
        with self.lock:
            have = self.levels.get(key, 0)
            if have < amount:
                log.warning("short on %s", key)
                return False
            self.levels[key] = have - amount
            return True

    def reserve_order(self, order):
        taken = []
        for line in order.lines:
            if not self.reserve(line.product.key(), line.quantity):
                self.release_all(taken)
                return False
            taken.append(line)
        return True

    def release_all(self, lines):
        for line in lines:
            self.restock(line.product.key(), line.quantity)

    def audit(self):
        # FIXME: negative levels should never happen
        return [k for k, v in self.levels.items() if v < 0]
