"""Pure-Python windowed jitter/transit estimator.

This is the reference twin of the compiled kernel in ``_estimator_cy.pyx``.
Both must produce bit-identical float64 results: every arithmetic expression
here is mirrored there operation for operation. Change one, change both.

State per stream, over a sliding window of recent arrivals:

* a histogram of inter-arrival jitter samples |d(arrival) - d(ts)| between
  consecutive arrivals, bin width ``bin_ms``;
* a histogram of one-way transits (arrival - ts);
* the current reordering lag, driven by a two-state machine. While the
  stream is orderly the lag tracks the jitter quantile at ``percentile``.
  A single out-of-order arrival opens a reordering episode: for its whole
  duration the lag only ratchets upward, to the minimizer of
  cost(i) = max(0, i - lag) + loss_cost * (1 - F(i)) where F is the jitter
  CDF, scanned in bin steps up to the window's max jitter. The episode
  closes once in-order arrivals have continued for ``DISORDER_GUARD_MS``
  with no further reordering; only then does the lag return to quantile
  tracking.

The episode state matters because a reorder run caused by one latency step
arrives interleaved with fresh packets. Treating each interleaved fresh
packet as "back in order" would re-arm the quantile mid-run and walk the
watermark straight over the run's remaining stragglers.

The transit quantile (upper bin edge) backs the playout buffer's target
delay; the lag backs the watermark reorderer. Sharing one window keeps the
two jitter managers driven by the same measurement process.
"""

from __future__ import annotations

from collections import deque

import numpy as np

# reordering-episode guard: the episode ends after this much orderly time.
# Deliberately a constant: tying it to the current lag would let a ratcheted
# lag hold the episode open, which holds the lag up, which locks the episode.
DISORDER_GUARD_MS = 100.0


class JitterEstimator:
    __slots__ = (
        "window_ms", "bin_ms", "percentile", "loss_cost_ms", "initial_lag_ms",
        "max_lag_ms", "_nbins", "_jitter_bins", "_transit_bins",
        "_jitter_total", "_transit_total", "_jitter_max", "_transit_max",
        "_window", "_has_prev", "_prev_ts", "_prev_arrival", "_last_arrival",
        "_latest_ts", "_lag", "_last_in_order", "_disorder", "_last_ooo_arrival",
    )

    def __init__(
        self,
        window_ms: float = 2000.0,
        bin_ms: float = 1.0,
        percentile: float = 0.95,
        loss_cost_ms: float = 100.0,
        initial_lag_ms: float = 0.0,
        max_lag_ms: float = 10000.0,
    ) -> None:
        if window_ms <= 0 or bin_ms <= 0 or max_lag_ms <= 0:
            raise ValueError("window_ms, bin_ms, max_lag_ms must be positive")
        if not (0 < percentile <= 1):
            raise ValueError("percentile must be in (0, 1]")
        if loss_cost_ms < 0 or initial_lag_ms < 0:
            raise ValueError("loss_cost_ms and initial_lag_ms must be nonnegative")
        self.window_ms = float(window_ms)
        self.bin_ms = float(bin_ms)
        self.percentile = float(percentile)
        self.loss_cost_ms = float(loss_cost_ms)
        self.initial_lag_ms = float(initial_lag_ms)
        self.max_lag_ms = float(max_lag_ms)
        self._nbins = int(max_lag_ms / bin_ms) + 1
        self._jitter_bins = np.zeros(self._nbins, dtype=np.int64)
        self._transit_bins = np.zeros(self._nbins, dtype=np.int64)
        self._jitter_total = 0
        self._transit_total = 0
        self._jitter_max = -1
        self._transit_max = -1
        self._window: deque[tuple[float, int, int]] = deque()
        self._has_prev = False
        self._prev_ts = 0.0
        self._prev_arrival = 0.0
        self._last_arrival = -np.inf
        self._latest_ts = -np.inf
        self._lag = min(float(initial_lag_ms), float(max_lag_ms))
        self._last_in_order = True
        self._disorder = False
        self._last_ooo_arrival = -np.inf

    @property
    def lag_ms(self) -> float:
        return self._lag

    @property
    def last_in_order(self) -> bool:
        return self._last_in_order

    @property
    def disorder(self) -> bool:
        """True while a reordering episode is open."""
        return self._disorder

    @property
    def n_window(self) -> int:
        return len(self._window)

    @property
    def n_jitter_samples(self) -> int:
        return self._jitter_total

    def _bin_of(self, value: float) -> int:
        b = int(value / self.bin_ms)
        return b if b < self._nbins else self._nbins - 1

    def _evict(self, now: float) -> None:
        cutoff = now - self.window_ms
        while self._window and self._window[0][0] < cutoff:
            _, jbin, tbin = self._window.popleft()
            if jbin >= 0:
                self._jitter_bins[jbin] -= 1
                self._jitter_total -= 1
                if jbin == self._jitter_max and self._jitter_bins[jbin] == 0:
                    m = self._jitter_max
                    while m >= 0 and self._jitter_bins[m] == 0:
                        m -= 1
                    self._jitter_max = m
            self._transit_bins[tbin] -= 1
            self._transit_total -= 1
            if tbin == self._transit_max and self._transit_bins[tbin] == 0:
                m = self._transit_max
                while m >= 0 and self._transit_bins[m] == 0:
                    m -= 1
                self._transit_max = m

    def update(self, ts: float, arrival: float) -> float:
        """Observe one arrival; returns the refreshed lag estimate."""
        if arrival < ts:
            raise ValueError("arrival precedes generation timestamp")
        if arrival < self._last_arrival:
            raise RuntimeError("arrivals must be fed in nondecreasing arrival order")
        self._last_arrival = arrival
        self._evict(arrival)

        if self._has_prev:
            jitter = abs((arrival - self._prev_arrival) - (ts - self._prev_ts))
            jbin = self._bin_of(jitter)
            self._jitter_bins[jbin] += 1
            self._jitter_total += 1
            if jbin > self._jitter_max:
                self._jitter_max = jbin
        else:
            jbin = -1
        tbin = self._bin_of(arrival - ts)
        self._transit_bins[tbin] += 1
        self._transit_total += 1
        if tbin > self._transit_max:
            self._transit_max = tbin
        self._window.append((arrival, jbin, tbin))
        self._prev_ts = ts
        self._prev_arrival = arrival
        self._has_prev = True

        in_order = ts > self._latest_ts
        if in_order:
            self._latest_ts = ts
            if self._disorder and arrival - self._last_ooo_arrival > DISORDER_GUARD_MS:
                self._disorder = False
        else:
            self._disorder = True
            self._last_ooo_arrival = arrival
        self._last_in_order = in_order

        if self._jitter_total == 0:
            lag = self.initial_lag_ms
        elif not self._disorder:
            lag = self._jitter_quantile()
        else:
            lag = max(self._lag, self._cost_argmin(self._lag))
        if lag > self.max_lag_ms:
            lag = self.max_lag_ms
        self._lag = lag
        return lag

    def _jitter_quantile(self) -> float:
        # lower bin edge of the smallest bin whose cumulative count covers
        # percentile * total
        cs = np.cumsum(self._jitter_bins[: self._jitter_max + 1])
        need = self.percentile * self._jitter_total
        idx = int(np.searchsorted(cs, need, side="left"))
        return idx * self.bin_ms

    def _cost_argmin(self, lag: float) -> float:
        cs = np.cumsum(self._jitter_bins[: self._jitter_max + 1])
        i_ms = np.arange(self._jitter_max + 1, dtype=np.float64) * self.bin_ms
        costs = np.maximum(i_ms - lag, 0.0) + self.loss_cost_ms * (
            1.0 - cs / self._jitter_total
        )
        return int(np.argmin(costs)) * self.bin_ms

    def transit_target(self) -> float:
        """Upper bin edge of the windowed transit quantile at ``percentile``.

        This is the playout buffer's generation-to-playout delay budget; the
        upper edge guarantees the budget covers the quantile sample itself.
        """
        if self._transit_total == 0:
            return self.initial_lag_ms
        cs = np.cumsum(self._transit_bins[: self._transit_max + 1])
        need = self.percentile * self._transit_total
        idx = int(np.searchsorted(cs, need, side="left"))
        return (idx + 1) * self.bin_ms
