"""ADWIN: adaptive windowing change detection over a numeric signal."""

from __future__ import annotations

import math
from collections import deque
from typing import NamedTuple

DEFAULT_DELTA = 0.002
MAX_BUCKETS = 5
MIN_WINDOW = 10
MIN_SUBWINDOW = 5


class Bucket(NamedTuple):
    """Summary of 2^row consecutive observations."""

    total: float
    variance: float  # sum of squared deviations from the bucket mean
    size: int


class AdwinDetector:
    """
    Adaptive window over a stream of numbers.

    The window is an exponential histogram: row r holds at most
    `max_buckets` buckets of 2^r observations each, newest first. After
    each insertion every boundary between buckets is tested, oldest
    first; when the two sub-windows on either side have significantly
    different means the older one is dropped and a drift is reported.
    """

    def __init__(self, delta: float = DEFAULT_DELTA,
                 max_buckets: int = MAX_BUCKETS,
                 min_window: int = MIN_WINDOW,
                 min_subwindow: int = MIN_SUBWINDOW,
                 stride: int = 1) -> None:
        if not 0.0 < delta < 1.0:
            raise ValueError("delta must be in (0, 1)")
        if max_buckets < 2 or stride < 1:
            raise ValueError("max_buckets must be >= 2 and stride >= 1")
        self.delta = delta
        self.max_buckets = max_buckets
        self.min_window = min_window
        self.min_subwindow = min_subwindow
        self.stride = stride
        self.reset()

    def reset(self) -> AdwinDetector:
        """Forget everything but the parameters."""
        # rows[r][0] is the newest bucket of size 2^r
        self.rows: list[deque[Bucket]] = []
        self.total_count = 0
        self.total_sum = 0.0
        self._variance = 0.0
        self._ticks = 0
        self.detections = 0
        return self

    @property
    def mean(self) -> float:
        """Mean of the window."""
        return self.total_sum / self.total_count if self.total_count else 0.0

    @property
    def variance(self) -> float:
        """Population variance of the window."""
        return self._variance / self.total_count if self.total_count else 0.0

    def window_size(self) -> int:
        """Number of observations in the window."""
        return self.total_count

    def bucket_count(self) -> int:
        """Buckets held over all rows."""
        return sum(len(row) for row in self.rows)

    def add(self, value: float) -> bool:
        """Insert an observation; True if the window was cut."""
        if not math.isfinite(value):
            raise ValueError(f"non-finite value {value!r}")
        self._insert(value)
        self._ticks += 1
        if self._ticks % self.stride != 0:
            return False
        drift = False
        while self._cut():
            drift = True
        if drift:
            self.detections += 1
        return drift

    def _insert(self, value: float) -> None:
        if self.total_count > 0:
            mean = self.total_sum / self.total_count
            n = self.total_count
            self._variance += n * (value - mean) ** 2 / (n + 1)
        self.total_count += 1
        self.total_sum += value
        if not self.rows:
            self.rows.append(deque())
        self.rows[0].appendleft(Bucket(value, 0.0, 1))
        self._compress()

    def _compress(self) -> None:
        r = 0
        while r < len(self.rows) and len(self.rows[r]) > self.max_buckets:
            row = self.rows[r]
            b2 = row.pop()  # oldest
            b1 = row.pop()
            n = b1.size
            u1, u2 = b1.total / n, b2.total / n
            merged = Bucket(
                b1.total + b2.total,
                b1.variance + b2.variance + n * n * (u1 - u2) ** 2 / (2 * n),
                2 * n
            )
            if r + 1 == len(self.rows):
                self.rows.append(deque())
            self.rows[r + 1].appendleft(merged)
            r += 1

    def _drop_oldest(self) -> None:
        row = self.rows[-1]
        bucket = row.pop()
        n1 = bucket.size
        n2 = self.total_count - n1
        self.total_count = n2
        self.total_sum -= bucket.total
        if n2 > 0:
            u1 = bucket.total / n1
            u2 = self.total_sum / n2
            self._variance -= bucket.variance + n1 * n2 * (u1 - u2) ** 2 / (
                n1 + n2)
            self._variance = max(self._variance, 0.0)
        else:
            self._variance = 0.0
        if not row:
            self.rows.pop()

    def _epsilon_cut(self, n0: int, n1: int) -> float:
        m = 1.0 / (1.0 / n0 + 1.0 / n1)
        log_term = math.log(2.0 / (self.delta / self.total_count))
        return (math.sqrt(2.0 / m * self.variance * log_term)
                + 2.0 / (3.0 * m) * log_term)

    def _cut(self) -> bool:
        """Test every bucket boundary once; drop the old part on a cut."""
        n = self.total_count
        if n < self.min_window:
            return False
        n0, sum0 = 0, 0.0
        for r in range(len(self.rows) - 1, -1, -1):
            # iterate oldest to newest within the row
            for bucket in reversed(self.rows[r]):
                n0 += bucket.size
                sum0 += bucket.total
                n1 = n - n0
                if n1 < self.min_subwindow:
                    return False
                if n0 < self.min_subwindow:
                    continue
                mean0 = sum0 / n0
                mean1 = (self.total_sum - sum0) / n1
                if abs(mean0 - mean1) >= self._epsilon_cut(n0, n1):
                    while self.total_count > n1:
                        self._drop_oldest()
                    return True
        return False


def window_size(detector: AdwinDetector) -> int:
    """Number of observations in the detector's current window."""
    return detector.window_size()


def reset(detector: AdwinDetector) -> AdwinDetector:
    """Return the detector to its fresh state, keeping delta."""
    return detector.reset()
