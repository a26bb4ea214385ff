#!/usr/bin/python
"""
Bounded cache of next-token distributions.

The critic recomputes the same next-token distribution many times over
  during a search (every candidate shares the retained prefix), so
  distributions are cached by context key. A full cache drops the
  context used least recently.

A distribution over the full vocabulary is 425 doubles, about 3.4 kB,
  so the default capacity holds some 14 MB per model.
"""
import logging
import threading
from collections import OrderedDict

g_logger = logging.getLogger("iic.ContextCache")

DEFAULT_CAPACITY = 4096


class DistributionCache(object):
    """
    Thread-safe mapping from a context key to a computed distribution,
      holding at most `capacity` entries.

    Values are shared between callers and must be treated as read-only.
    """
    def __init__(self, capacity=DEFAULT_CAPACITY):
        super(DistributionCache, self).__init__()
        if capacity < 1:
            raise ValueError("cache capacity must be positive: %r" % capacity)
        self._capacity = int(capacity)
        self._values = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0
        self.evictions = 0

    @property
    def capacity(self):
        return self._capacity

    def get(self, key):
        """
        @return: the cached value, or None on a miss.
        """
        with self._lock:
            try:
                v = self._values[key]
            except KeyError:
                self.misses += 1
                return None
            self._values.move_to_end(key)
            self.hits += 1
            return v

    def put(self, key, value):
        with self._lock:
            self._values[key] = value
            self._values.move_to_end(key)
            if len(self._values) > self._capacity:
                self._values.popitem(last=False)
                self.evictions += 1
                if self.evictions == 1:
                    g_logger.debug("distribution cache full at %d contexts", self._capacity)

    def clear(self):
        with self._lock:
            self._values.clear()

    def hit_rate(self):
        lookups = self.hits + self.misses
        return self.hits / float(lookups) if lookups else 0.0

    def __len__(self):
        return len(self._values)

    def __repr__(self):
        return "DistributionCache(capacity=%d, size=%d, hits=%d, misses=%d)" % (
            self._capacity, len(self._values), self.hits, self.misses)

    @staticmethod
    def test():
        c = DistributionCache(capacity=2)
        assert c.get(("a",)) is None
        c.put(("a",), 1)
        c.put(("b",), 2)
        assert c.get(("a",)) == 1
        c.put(("c",), 3)
        # ("b",) was least recently used
        assert c.get(("b",)) is None
        assert c.get(("a",)) == 1
        assert c.get(("c",)) == 3
        assert len(c) == 2
        assert c.evictions == 1

        c.put(("a",), 4)
        c.put(("d",), 5)
        # overwriting ("a",) refreshed it
        assert c.get(("c",)) is None
        assert c.get(("a",)) == 4
        return True


def test():
    return DistributionCache.test()


if __name__ == "__main__":
    if test():
        print("ContextCache passed tests.")
