"""Branching (cluster) simulation of Hawkes processes with variable productivity.

Events are processed through a time-ordered heap: offspring always occur
strictly after their parent, so when an event is popped every earlier event is
already realized.  That makes renewal productivities (which depend on the gap
to the previous point of the merged process) well defined during generation,
and it yields catalogs that are sorted by construction.

Offspring counts are Poisson(k * mass) where mass is the triggering mass that
fits inside the window, and lags are drawn from the window-truncated kernel by
inverse transform, so the cluster construction is exact on [0, T] rather than
edge-biased.
"""

from __future__ import annotations

import heapq
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .core import EventCatalog, TriggeringKernel

__all__ = [
    "CascadeError",
    "MagnitudeDistribution",
    "ConstantProductivity",
    "TimeProductivity",
    "RenewalProductivity",
    "MagnitudeProductivity",
    "ProductivitySpec",
    "simulate_poisson",
    "simulate_variable_hawkes",
    "simulate_etas",
]

DEFAULT_EVENT_CAP = 10**6


class CascadeError(RuntimeError):
    """Raised when a simulated cascade exceeds the event cap."""


@dataclass(frozen=True)
class MagnitudeDistribution:
    """Exponential magnitude law with rate ``rate``, lower-truncated at ``m0``."""

    rate: float
    m0: float

    def __post_init__(self):
        if not (math.isfinite(self.rate) and self.rate > 0):
            raise ValueError("rate must be positive")

    def sample(self, rng: np.random.Generator, size=None):
        return self.m0 + rng.exponential(1.0 / self.rate, size=size)

    def mean_boost(self, a: float) -> float:
        """E[exp(a * (m - m0))]; infinite when a >= rate."""
        if a >= self.rate:
            return math.inf
        return self.rate / (self.rate - a)


@dataclass(frozen=True)
class ConstantProductivity:
    k: float


@dataclass(frozen=True)
class TimeProductivity:
    """Productivity k(t) as a function of the event's own time."""

    fn: Callable[[float], float]


@dataclass(frozen=True)
class RenewalProductivity:
    """Productivity as a function of the gap to the previous event.

    The first event's gap is measured from the window start (gap convention
    "previous time = 0").
    """

    fn: Callable[[float], float]


@dataclass(frozen=True)
class MagnitudeProductivity:
    """k = base * exp(a * (m - m0)) with magnitudes drawn per event."""

    base: float
    a: float
    m0: float

    def k_of(self, m: float) -> float:
        return self.base * math.exp(self.a * (m - self.m0))


ProductivitySpec = Union[
    ConstantProductivity, TimeProductivity, RenewalProductivity, MagnitudeProductivity
]


def _strictly_increasing(times: np.ndarray) -> np.ndarray:
    """Nudge exact ties upward by one ulp; ties have probability zero but
    float draws can collide."""
    for _ in range(64):
        bad = np.nonzero(np.diff(times) <= 0)[0]
        if bad.size == 0:
            return times
        times[bad + 1] = np.nextafter(times[bad], np.inf)
    raise RuntimeError("could not repair tied event times")


def simulate_poisson(rate: float, t_end: float, rng_seed) -> EventCatalog:
    """Homogeneous Poisson catalog on [0, t_end]."""
    if rate < 0:
        raise ValueError("rate must be nonnegative")
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    rng = np.random.default_rng(rng_seed)
    count = rng.poisson(rate * t_end)
    times = np.sort(rng.uniform(0.0, t_end, size=count))
    return EventCatalog(_strictly_increasing(times), window_end=t_end)


def simulate_variable_hawkes(
    mu: float,
    kernel: TriggeringKernel,
    spec: ProductivitySpec,
    t_end: float,
    rng_seed,
    *,
    mags: MagnitudeDistribution | None = None,
    max_events: int = DEFAULT_EVENT_CAP,
    return_offspring: bool = False,
):
    """Simulate a variable-productivity Hawkes process on [0, t_end].

    Returns ``(catalog, true_k)`` where ``true_k`` holds each event's
    productivity assigned at birth, aligned with the sorted catalog.  With
    ``return_offspring=True`` a third array of realized direct-offspring
    counts is appended (useful for validating the cluster construction).
    """
    if not mu > 0:
        raise ValueError("mu must be positive")
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    if isinstance(spec, MagnitudeProductivity) and mags is None:
        raise ValueError("magnitude-driven productivity needs a MagnitudeDistribution")

    rng = np.random.default_rng(rng_seed)
    n_background = rng.poisson(mu * t_end)
    heap = list(np.sort(rng.uniform(0.0, t_end, size=n_background)))
    heapq.heapify(heap)

    out_times: list[float] = []
    out_k: list[float] = []
    out_marks: list[float] = []
    out_children: list[int] = []
    prev_time = 0.0
    total = n_background

    while heap:
        t = heapq.heappop(heap)
        if isinstance(spec, ConstantProductivity):
            k = spec.k
        elif isinstance(spec, TimeProductivity):
            k = float(spec.fn(t))
        elif isinstance(spec, RenewalProductivity):
            k = float(spec.fn(t - prev_time))
        elif isinstance(spec, MagnitudeProductivity):
            m = float(mags.sample(rng))
            out_marks.append(m)
            k = spec.k_of(m)
        else:
            raise TypeError(f"unknown productivity spec: {type(spec).__name__}")
        if not (math.isfinite(k) and k >= 0):
            raise ValueError(f"productivity must be finite and nonnegative, got {k} at t={t}")

        mass = float(kernel.tail_integral(t_end - t))
        n_children = int(rng.poisson(k * mass)) if k * mass > 0 else 0
        if n_children:
            lags = kernel.quantile(rng.uniform(0.0, mass, size=n_children))
            total += n_children
            if total > max_events:
                raise CascadeError(
                    f"simulation exceeded {max_events} events; the configuration is "
                    "supercritical or the cap is too small"
                )
            for lag in np.atleast_1d(lags):
                heapq.heappush(heap, t + float(lag))

        out_times.append(t)
        out_k.append(k)
        out_children.append(n_children)
        prev_time = t

    times = _strictly_increasing(np.asarray(out_times, dtype=float))
    marks = np.asarray(out_marks, dtype=float) if out_marks else None
    catalog = EventCatalog(times, window_end=t_end, marks=marks)
    true_k = np.asarray(out_k, dtype=float)
    if return_offspring:
        return catalog, true_k, np.asarray(out_children, dtype=int)
    return catalog, true_k


def simulate_etas(
    mu: float,
    kernel: TriggeringKernel,
    base: float,
    a: float,
    mags: MagnitudeDistribution,
    t_end: float,
    rng_seed,
    *,
    max_events: int = DEFAULT_EVENT_CAP,
) -> EventCatalog:
    """ETAS-style simulation: productivity base * exp(a * (m - m0)), iid marks."""
    ratio = base * mags.mean_boost(a)
    if ratio >= 1:
        warnings.warn(
            f"mean branching ratio {ratio:.3g} >= 1; the cascade may hit the event cap",
            RuntimeWarning,
            stacklevel=2,
        )
    spec = MagnitudeProductivity(base=base, a=a, m0=mags.m0)
    catalog, _ = simulate_variable_hawkes(
        mu, kernel, spec, t_end, rng_seed, mags=mags, max_events=max_events
    )
    return catalog
