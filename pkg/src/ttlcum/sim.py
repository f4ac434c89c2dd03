"""Discrete-event simulation of reset-TTL and replacement caches."""
from __future__ import annotations

import csv
import heapq
import math
import random
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .catalog import Catalog
from .errors import DomainError, InvalidInstanceError
from .workload import sample_stream


@dataclass
class Events:
    """A merged request sequence: ``times`` non-decreasing, ``ids`` 0-based content indices."""

    times: np.ndarray
    ids: np.ndarray
    n: int

    def __len__(self) -> int:
        return len(self.ids)


def merge_streams(streams, n: int | None = None) -> Events:
    """Merge per-content request streams into one event sequence.

    ``streams[i]`` holds the requests of content ``i``. Ties are broken by
    content index.
    """
    times = np.concatenate([np.asarray(s.times, dtype=float) for s in streams])
    ids = np.concatenate([np.full(len(s.times), i, dtype=np.int64) for i, s in enumerate(streams)])
    order = np.lexsort((ids, times))
    return Events(times[order], ids[order], len(streams) if n is None else n)


def catalog_events(catalog: Catalog, seed, horizon: float | None = None, requests: int | None = None,
                   mmpp_initial: str = "arrival") -> Events:
    """Sample every content's stream independently and merge them.

    Either ``horizon`` or a number of ``requests`` must be given. A request
    count is converted to a horizon through the total rate; the horizon is
    lengthened until the merged stream has that many requests, then truncated.
    """
    if horizon is None and requests is None:
        raise InvalidInstanceError("give a horizon or a request count")
    total_rate = float(np.sum(catalog.rates))
    if horizon is None:
        horizon = 1.05 * requests / total_rate + 10.0 / total_rate
    while True:
        seeds = np.random.SeedSequence(seed).spawn(catalog.n)
        streams = [sample_stream(m, np.random.default_rng(s), horizon, i + 1, mmpp_initial)
                   for i, (m, s) in enumerate(zip(catalog.models, seeds))]
        events = merge_streams(streams, catalog.n)
        if requests is None or len(events) >= requests:
            break
        horizon *= 1.5
    if requests is not None:
        events = Events(events.times[:requests], events.ids[:requests], events.n)
    return events


@dataclass
class SimStats:
    """Measured behaviour of one simulation run after warmup.

    Attributes
    ----------
    requests, hits : ndarray
        Per-content counts over the measured window.
    duration : float
        Length of the measured window in time units.
    hit_flags : ndarray of bool
        Hit indicator of every measured request, in order.
    occupancy : ndarray
        Number of cached contents right after each measured request.
    eta : ndarray or None
        Multiplier after each request (whole run), when the controller has one.
    """

    requests: np.ndarray
    hits: np.ndarray
    duration: float
    hit_flags: np.ndarray
    occupancy: np.ndarray
    eta: np.ndarray | None = None
    timers: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    @property
    def misses(self) -> np.ndarray:
        return self.requests - self.hits

    @property
    def hit_prob(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.requests > 0, self.hits / np.maximum(self.requests, 1), np.nan)

    @property
    def hit_rate(self) -> np.ndarray:
        return self.hits / self.duration if self.duration > 0 else np.full(len(self.hits), np.nan)

    @property
    def aggregate_hit_rate(self) -> float:
        return float(self.hits.sum() / self.duration) if self.duration > 0 else math.nan

    @property
    def aggregate_hit_prob(self) -> float:
        return float(self.hits.sum() / max(self.requests.sum(), 1))

    def histogram(self) -> tuple[np.ndarray, np.ndarray]:
        """Empirical distribution of the cache size over measured request epochs."""
        sizes, counts = np.unique(self.occupancy, return_counts=True)
        return sizes, counts / counts.sum()

    def mass_within(self, low: float, high: float) -> float:
        occ = self.occupancy
        return float(np.mean((occ >= low) & (occ <= high))) if len(occ) else math.nan

    def utility(self, weights, beta: float, floor: float = 1e-9) -> float:
        from .solver import aggregate_utility

        return aggregate_utility(np.maximum(self.hit_rate, floor), weights, beta)

    def to_csv(self, path, ids=None) -> None:
        ids = np.arange(1, len(self.hits) + 1) if ids is None else ids
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "requests", "hits", "hit_prob", "hit_rate"])
            for row in zip(ids, self.requests, self.hits, self.hit_prob, self.hit_rate):
                writer.writerow([int(row[0]), int(row[1]), int(row[2]), repr(float(row[3])), repr(float(row[4]))])

    def histogram_to_csv(self, path) -> None:
        sizes, probs = self.histogram()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["size", "probability"])
            for s, p in zip(sizes, probs):
                writer.writerow([int(s), repr(float(p))])


def _warmup_index(m: int, warmup: float) -> int:
    if not 0 <= warmup < 1:
        raise DomainError("warmup fraction must lie in [0, 1)")
    return int(math.floor(warmup * m))


def simulate_ttl(events: Events, controller, warmup: float = 0.2, record_eta: bool = True,
                 eta_stride: int = 1) -> SimStats:
    """Run a reset-TTL cache driven by ``controller`` over ``events``.

    A request is a hit iff the content's timer has not expired (expiry
    strictly after the request time). After every request the controller
    returns the content's new timer, which restarts from the request time;
    a zero timer leaves the content uncached and ``inf`` pins it.
    """
    times = events.times.tolist()
    ids = events.ids.tolist()
    m, n = len(ids), events.n
    start = _warmup_index(m, warmup)
    expiry = [-math.inf] * n
    heap: list = []
    occ = 0
    requests = np.zeros(n, dtype=np.int64)
    hits = np.zeros(n, dtype=np.int64)
    flags = np.zeros(m - start, dtype=bool)
    occupancy = np.zeros(m - start, dtype=np.int64)
    has_eta = record_eta and getattr(controller, "eta", None) is not None
    eta_trace = [] if has_eta else None
    on_request = controller.on_request
    push, pop = heapq.heappush, heapq.heappop
    inf = math.inf
    for k in range(m):
        now = times[k]
        i = ids[k]
        while heap and heap[0][0] <= now:
            e, c = pop(heap)
            if expiry[c] == e:
                expiry[c] = -inf
                occ -= 1
        hit = expiry[i] > now
        if not hit:
            occ += 1
        t = on_request(i, now, occ, hit)
        if t > 0:
            e = now + t
            expiry[i] = e
            if e != inf:
                push(heap, (e, i))
        else:
            expiry[i] = -inf
            occ -= 1
        if k >= start:
            j = k - start
            requests[i] += 1
            if hit:
                hits[i] += 1
                flags[j] = True
            occupancy[j] = occ
        if has_eta and k % eta_stride == 0:
            eta_trace.append(controller.eta)
    duration = times[-1] - times[start - 1] if start > 0 else (times[-1] - 0.0 if m else 0.0)
    stats = SimStats(requests, hits, duration, flags, occupancy,
                     np.array(eta_trace) if has_eta else None)
    state = getattr(controller, "state", None)
    if state is not None and getattr(state, "timers", None) is not None:
        stats.timers = np.array(state.timers, dtype=float)
    return stats


POLICIES = ("lru", "fifo", "random")


def simulate_replacement(policy: str, events: Events, cache_size: int, seed=None, warmup: float = 0.2) -> SimStats:
    """Run a fixed-capacity LRU, FIFO or RANDOM cache over ``events``."""
    policy = policy.lower()
    if policy not in POLICIES:
        raise InvalidInstanceError(f"unknown replacement policy {policy!r}")
    cache_size = int(cache_size)
    if cache_size < 1:
        raise DomainError("cache must hold at least one content")
    ids = events.ids.tolist()
    times = events.times
    m, n = len(ids), events.n
    start = _warmup_index(m, warmup)
    requests = np.zeros(n, dtype=np.int64)
    hits = np.zeros(n, dtype=np.int64)
    flags = np.zeros(m - start, dtype=bool)
    occupancy = np.zeros(m - start, dtype=np.int64)
    rng = random.Random(seed)
    if policy == "random":
        slots: list = []
        where: dict = {}
    else:
        cache: OrderedDict = OrderedDict()
    for k in range(m):
        i = ids[k]
        if policy == "random":
            hit = i in where
            if not hit:
                if len(slots) >= cache_size:
                    pos = rng.randrange(len(slots))
                    victim = slots[pos]
                    del where[victim]
                    slots[pos] = i
                    where[i] = pos
                else:
                    where[i] = len(slots)
                    slots.append(i)
            size = len(slots)
        else:
            hit = i in cache
            if hit:
                if policy == "lru":
                    cache.move_to_end(i)
            else:
                if len(cache) >= cache_size:
                    cache.popitem(last=False)
                cache[i] = None
            size = len(cache)
        if k >= start:
            j = k - start
            requests[i] += 1
            if hit:
                hits[i] += 1
                flags[j] = True
            occupancy[j] = size
    duration = float(times[-1] - times[start - 1]) if start > 0 else (float(times[-1]) if m else 0.0)
    return SimStats(requests, hits, duration, flags, occupancy)


def characteristic_time(catalog: Catalog, cache_size: float | None = None) -> float:
    """Time T with Σᵢ F̂ᵢ(T) = B (the LRU characteristic time)."""
    B = catalog.cache_size if cache_size is None else cache_size
    if not 0 < B < catalog.n:
        raise DomainError("characteristic time needs 0 < B < n")

    def resid(log_t: float) -> float:
        return math.fsum(catalog.age(math.exp(log_t))) - B

    lo = hi = -math.log(float(np.max(catalog.rates)))
    while resid(lo) > 0:
        lo -= 2.0
    while resid(hi) < 0:
        hi += 2.0
    return math.exp(optimize.brentq(resid, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps))
