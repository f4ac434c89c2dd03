"""Request traces: parsing, synthesis, windowed comparisons and utility reports."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np

from .catalog import Catalog, scheme_weights
from .errors import InvalidInstanceError
from .sim import Events, catalog_events
from .solver import aggregate_utility

log = logging.getLogger(__name__)

UTILITY_FLOOR = 1e-9


@dataclass
class Trace:
    """Ordered requests; ``ids`` are 1-based content ids in ``[1, n]``."""

    times: np.ndarray
    ids: np.ndarray
    n: int

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def events(self) -> Events:
        return Events(self.times, self.ids - 1, self.n)

    def empirical_rates(self, min_count: float = 0.5) -> np.ndarray:
        """Requests per unit time of every content over the trace's span.

        Contents requested fewer than ``min_count`` times are credited with
        ``min_count`` requests so that every rate (and weight) is positive.
        """
        counts = np.maximum(np.bincount(self.ids - 1, minlength=self.n).astype(float), min_count)
        span = float(self.times[-1] - self.times[0]) if len(self) > 1 else 1.0
        return counts / (span if span > 0 else 1.0)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            for t, i in zip(self.times, self.ids):
                writer.writerow([repr(float(t)), int(i)])


def parse_trace(path, format: str = "csv") -> Trace:
    """Read a trace file.

    ``format="csv"``: lines ``time,content_id``; ``format="ids"``: one
    ``content_id`` per line with times 1, 2, 3, ... by position. Blank lines
    and lines starting with ``#`` are skipped; ids must be positive integers.
    """
    if format not in ("csv", "ids"):
        raise InvalidInstanceError(f"unknown trace format {format!r}")
    times, ids = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            try:
                if format == "csv":
                    if len(parts) != 2:
                        raise ValueError("expected 'time,content_id'")
                    t, cid = float(parts[0]), int(parts[1])
                else:
                    if len(parts) != 1:
                        raise ValueError("expected a single content id")
                    t, cid = float(len(ids) + 1), int(parts[0])
            except ValueError as exc:
                raise InvalidInstanceError(f"{path}:{lineno}: malformed line {line!r} ({exc})") from None
            if cid < 1:
                raise InvalidInstanceError(f"{path}:{lineno}: content ids must be >= 1")
            if not math.isfinite(t):
                raise InvalidInstanceError(f"{path}:{lineno}: time must be finite")
            if times and t < times[-1]:
                raise InvalidInstanceError(f"{path}:{lineno}: timestamps out of order")
            times.append(t)
            ids.append(cid)
    if not ids:
        raise InvalidInstanceError(f"{path}: trace is empty")
    ids_arr = np.array(ids, dtype=np.int64)
    return Trace(np.array(times), ids_arr, int(ids_arr.max()))


def synth_trace(catalog: Catalog, seed, total: int) -> Trace:
    """Merged synthetic requests of every content, truncated to ``total`` requests."""
    events = catalog_events(catalog, seed, requests=total)
    return Trace(events.times, events.ids + 1, catalog.n)


def window_hits(hit_flags, window: int = 3000) -> np.ndarray:
    """Hit counts per consecutive window of requests; a shorter tail forms the last window."""
    flags = np.asarray(hit_flags, dtype=np.int64)
    if window < 1:
        raise InvalidInstanceError("window must be positive")
    full = len(flags) // window * window
    counts = flags[:full].reshape(-1, window).sum(axis=1)
    if full < len(flags) or len(flags) == 0:
        counts = np.append(counts, flags[full:].sum())
    return counts


def windowed_relative_error(hits_a, hits_b, window: int = 3000) -> np.ndarray:
    """Per-window |A - B| / max(B, 1) of two hit sequences over the same requests.

    ``hits_a`` and ``hits_b`` are per-request hit indicators of equal length.
    """
    a, b = np.asarray(hits_a), np.asarray(hits_b)
    if a.shape != b.shape:
        raise InvalidInstanceError("hit sequences must cover the same requests")
    wa, wb = window_hits(a, window), window_hits(b, window)
    return np.abs(wa - wb) / np.maximum(wb, 1)


@dataclass(frozen=True)
class WeightScheme:
    """``rate`` (wᵢ = μᵢ), ``inverse_rate`` (wᵢ = 1/μᵢ) or ``random`` (uniform, seeded)."""

    kind: str
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in ("rate", "inverse_rate", "random"):
            raise InvalidInstanceError(f"unknown weight scheme {self.kind!r}")

    def weights(self, rates) -> np.ndarray:
        return scheme_weights(self.kind, rates, self.seed)


@dataclass
class UtilityReport:
    policies: list
    utilities: np.ndarray
    baseline: str

    @property
    def normalized(self) -> np.ndarray:
        """Utilities relative to the baseline: 1 + (U_P - U_L)/|U_L| (equals U_P/U_L when U_L > 0)."""
        base = self.utilities[self.policies.index(self.baseline)]
        return 1.0 + (self.utilities - base) / abs(base)

    def ratio(self, policy: str) -> float:
        return float(self.normalized[self.policies.index(policy)])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["policy", "aggregate_utility", "normalized"])
            for p, u, r in zip(self.policies, self.utilities, self.normalized):
                writer.writerow([p, repr(float(u)), repr(float(r))])


def weighted_utility_report(hit_rates: dict, weights, beta: float, baseline: str = "lru",
                            floor: float = UTILITY_FLOOR) -> UtilityReport:
    """Aggregate β-fair utility of each policy's per-content hit rates.

    Hit rates below ``floor`` are raised to it (utilities with β ≥ 1 are
    unbounded below at zero); every floored content is logged.
    """
    if baseline not in hit_rates:
        raise InvalidInstanceError(f"baseline policy {baseline!r} missing")
    names = list(hit_rates)
    utilities = []
    for name in names:
        rates = np.asarray(hit_rates[name], dtype=float)
        low = rates < floor
        if beta >= 1 and np.any(low):
            log.info("%s: %d contents with hit rate below %g floored", name, int(low.sum()), floor)
        utilities.append(aggregate_utility(np.maximum(rates, floor), weights, beta))
    return UtilityReport(names, np.array(utilities), baseline)
