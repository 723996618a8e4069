import functools
import time


def memoize(ttl=60):
    def wrap(fn):
        store = {}

        @functools.wraps(fn)
        def inner(*args):
            now = time.time()
            hit = store.get(args)
            if hit and now - hit[0] < ttl:
                return hit[1]
            value = fn(*args)
            store[args] = (now, value)
            return value

        return inner

    return wrap


@memoize(ttl=5)
def expensive_lookup(key):
    return sum(ord(c) for c in key)


class LruCache:
    def __init__(self, capacity):
        self.capacity = capacity
        self.items = {}
        self.order = []

    def get(self, key):
        if key not in self.items:
            return None
        self.order.remove(key)
        self.order.append(key)
        return self.items[key]

    def put(self, key, value):
        if key in self.items:
            self.order.remove(key)
        elif len(self.items) >= self.capacity:
            oldest = self.order.pop(0)
            del self.items[oldest]
        self.items[key] = value
        self.order.append(key)
