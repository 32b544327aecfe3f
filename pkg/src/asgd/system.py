"""Worker-pool simulation realizing System delays in virtual time.

N workers compute gradients with Exp(rate_w) service times, rates drawn once
from Gamma(2, 1) (or per task with ``redraw_rates``). A worker finishing a
task immediately starts the next one at the server's current version, so the
staleness of a delivered gradient is the number of server updates since the
worker last synced. The delivery that completes a batch is what triggers the
server update, so that worker's next task starts at the new version; with a
single worker every delivery is therefore fresh.

Each worker's service gaps come from its own stream and are consumed strictly
in order, so results do not depend on how collections are batched. Collection
itself is vectorized: buffers are extended until at least ``need`` completions
lie strictly below every worker's buffered horizon (so nothing unbuffered can
precede them), then the need-th order statistic of that window is selected.
This pops exactly the same events in the same order as an event-by-event loop
with (time, worker_id) tie-breaking, in O(need) rather than O(workers * need).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .delays import SystemDelay

_BLOCK = 8192

__all__ = ["PoolCollect", "WorkerPool"]


@dataclass(frozen=True)
class PoolCollect:
    """Aggregated result of popping a batch of completion events.

    ``versions``/``counts`` give, per distinct parameter version, how many of
    the popped gradients were computed at it (versions ascending). ``time`` is
    the virtual time of the last popped event; delay stats are per gradient.
    """

    versions: np.ndarray
    counts: np.ndarray
    time: float
    max_delay: int
    delay_sum: int


class WorkerPool:
    def __init__(self, model: SystemDelay, seed: int):
        self.workers = model.workers
        self.redraw = model.redraw_rates
        self.rates = rngmod.stream(seed, rngmod.WORKER_RATES).gamma(
            2.0, 1.0, size=model.workers
        )
        self._gap_rngs = [
            rngmod.stream(seed, rngmod.WORKER_GAPS, w) for w in range(model.workers)
        ]
        self.read_version = np.zeros(model.workers, dtype=np.int64)
        # absolute completion times of buffered future tasks, consumption index,
        # and the completion time of the last consumed task (sync rounds need it)
        self._ctimes: list[np.ndarray] = [np.empty(0) for _ in range(model.workers)]
        self._idx = [0] * model.workers
        self._last = [0.0] * model.workers

    def _draw_gaps(self, w: int, count: int) -> np.ndarray:
        gen = self._gap_rngs[w]
        if self.redraw:
            lam = gen.gamma(2.0, 1.0, size=count)
            return gen.standard_exponential(count) / lam
        return gen.standard_exponential(count) / self.rates[w]

    def preload_gaps(self, w: int, gaps: np.ndarray) -> None:
        """Test hook: replace worker w's future service gaps with fixed values.

        Only valid before any consumption; exhausting the preload falls back
        to drawn gaps.
        """
        if self._idx[w] != 0 or self._last[w] != 0.0 or self._ctimes[w].size != 0:
            raise RuntimeError("preload_gaps must be called before consumption")
        gaps = np.asarray(gaps, dtype=float)
        if np.any(gaps <= 0.0):
            raise ValueError("service gaps must be positive")
        self._ctimes[w] = np.cumsum(gaps)

    def _extend(self, w: int, count: int) -> None:
        gaps = self._draw_gaps(w, max(count, _BLOCK))
        tail = self._ctimes[w][self._idx[w] :]
        base = self._ctimes[w][-1] if self._ctimes[w].size else 0.0
        self._ctimes[w] = np.concatenate((tail, base + np.cumsum(gaps)))
        self._idx[w] = 0

    def _ensure(self, w: int, count: int) -> None:
        avail = self._ctimes[w].size - self._idx[w]
        if avail < count:
            self._extend(w, count - avail)

    def collect(self, need: int, current_version: int) -> PoolCollect:
        """Pop the ``need`` earliest completions; workers restart at ``current_version``."""
        if need < 1:
            raise ValueError("need must be a positive integer")
        if current_version < 0:
            raise ValueError("current_version must be non-negative")
        n_workers = self.workers
        for w in range(n_workers):
            self._ensure(w, need // n_workers + 1)
        # grow the laggard buffer until >= need completions lie strictly below
        # the earliest buffered horizon; beyond it nothing unbuffered can hide
        while True:
            slices = [self._ctimes[w][self._idx[w] :] for w in range(n_workers)]
            horizon = min(s[-1] for s in slices)
            below = [int(np.searchsorted(s, horizon, side="left")) for s in slices]
            if sum(below) >= need:
                break
            laggard = min(range(n_workers), key=lambda w: slices[w][-1])
            self._extend(laggard, self._ctimes[laggard].size - self._idx[laggard] + 1)
        slices = [s[: min(b, need)] for s, b in zip(slices, below)]
        merged = np.concatenate(slices)
        tstar = float(np.partition(merged, need - 1)[need - 1])

        taken = np.empty(n_workers, dtype=np.int64)
        for w in range(n_workers):
            taken[w] = np.searchsorted(slices[w], tstar, side="right")
        excess = int(taken.sum()) - need
        # exact time ties: the event loop pops the lowest worker id first, so
        # tied events are surrendered by the highest ids
        w = n_workers - 1
        while excess > 0 and w >= 0:
            while excess > 0 and taken[w] > 0 and slices[w][taken[w] - 1] == tstar:
                taken[w] -= 1
                excess -= 1
            w -= 1

        popped = taken > 0
        stale = self.read_version[popped]
        delays = current_version - stale
        fresh = need - int(popped.sum())
        versions, counts = np.unique(stale, return_counts=True)
        if fresh > 0:
            at = np.searchsorted(versions, current_version)
            if at < versions.size and versions[at] == current_version:
                counts[at] += fresh
            else:
                versions = np.insert(versions, at, current_version)
                counts = np.insert(counts, at, fresh)

        for w in range(n_workers):
            if taken[w] > 0:
                i = self._idx[w] + int(taken[w])
                self._last[w] = float(self._ctimes[w][i - 1])
                self._idx[w] = i
        self.read_version[popped] = current_version
        # the final delivery (last pop: highest id among events at tstar) is
        # what triggers the server update, so that worker's next task starts
        # at the new version; everyone else restarted before the update
        completer = max(
            w for w in range(n_workers)
            if taken[w] > 0 and slices[w][taken[w] - 1] == tstar
        )
        self.read_version[completer] = current_version + 1

        return PoolCollect(
            versions=versions.astype(np.int64),
            counts=counts.astype(np.int64),
            time=tstar,
            max_delay=int(delays.max()) if delays.size else 0,
            delay_sum=int(delays.sum()),
        )

    def sync_round(self, quotas: np.ndarray) -> float:
        """Duration of one synchronous round: every worker computes its quota
        of gradients back to back; the round ends when the slowest finishes."""
        quotas = np.asarray(quotas, dtype=np.int64)
        if quotas.shape != (self.workers,) or np.any(quotas < 0):
            raise ValueError("quotas must be one non-negative count per worker")
        duration = 0.0
        for w in range(self.workers):
            q = int(quotas[w])
            if q == 0:
                continue
            self._ensure(w, q)
            i = self._idx[w] + q
            finish = float(self._ctimes[w][i - 1])
            duration = max(duration, finish - self._last[w])
            self._last[w] = finish
            self._idx[w] = i
        return duration
