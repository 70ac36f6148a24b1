"""Shared domain types: event catalogs, triggering kernels, model parameters.

Conventions used throughout the package: event times live on an observation
window ``[window_start, window_end]`` in arbitrary time units (the CLI uses
days); triggering kernels are probability densities on ``[0, inf)`` that
vanish on negative lags; productivities are unitless expected first-generation
offspring counts.  All types are immutable after construction and all
operations are pure functions, so everything here is safe to share across
threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "EventCatalog",
    "TriggeringKernel",
    "ExponentialKernel",
    "EtasPowerLawKernel",
    "HawkesParams",
    "ProductivityEstimate",
    "PIPELINE_FLAGS",
    "conditional_intensity",
    "intensity_function",
]

PIPELINE_FLAGS = frozenset({"raw", "truncated", "rescaled", "smoothed"})


def _frozen_array(values, dtype=float) -> np.ndarray:
    out = np.array(values, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class EventCatalog:
    """Strictly increasing event times with optional marks and coordinates.

    ``marks`` are magnitudes (one per event); ``coords`` are passive (x, y)
    locations carried through for plotting and export but never used by the
    temporal estimators.
    """

    times: np.ndarray
    window_end: float
    marks: np.ndarray | None = None
    coords: np.ndarray | None = None
    window_start: float = 0.0

    def __post_init__(self):
        times = _frozen_array(np.atleast_1d(self.times))
        if times.ndim != 1:
            raise ValueError("times must be one-dimensional")
        if times.size > 1 and not np.all(np.diff(times) > 0):
            raise ValueError("non-increasing times")
        if not math.isfinite(self.window_end) or self.window_end < self.window_start:
            raise ValueError("window_end must be finite and >= window_start")
        if times.size and (times[0] < self.window_start or times[-1] > self.window_end):
            raise ValueError("event times outside the observation window")
        object.__setattr__(self, "times", times)
        if self.marks is not None:
            marks = _frozen_array(np.atleast_1d(self.marks))
            if marks.shape != times.shape:
                raise ValueError("marks must align with times")
            object.__setattr__(self, "marks", marks)
        if self.coords is not None:
            coords = _frozen_array(np.atleast_2d(self.coords))
            if coords.shape != (times.size, 2):
                raise ValueError("coords must be an (n, 2) array")
            object.__setattr__(self, "coords", coords)

    @property
    def n(self) -> int:
        return int(self.times.size)

    @property
    def duration(self) -> float:
        return float(self.window_end - self.window_start)


class TriggeringKernel:
    """Normalized density of offspring time lags, zero on negative lags."""

    def evaluate(self, u):
        """Density g(u); vanishes for u < 0."""
        raise NotImplementedError

    def tail_integral(self, u):
        """Cumulative mass on [0, u]; tends to 1 as u grows."""
        raise NotImplementedError

    def quantile(self, p):
        """Inverse of ``tail_integral`` on [0, 1); used by the simulators."""
        raise NotImplementedError


def _scalar_or_array(raw, template):
    arr = np.asarray(template)
    return float(raw) if arr.ndim == 0 else raw


@dataclass(frozen=True)
class ExponentialKernel(TriggeringKernel):
    """g(u) = beta * exp(-beta * u) for u >= 0."""

    beta: float

    def __post_init__(self):
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise ValueError("beta must be positive and finite")

    def evaluate(self, u):
        u_arr = np.asarray(u, dtype=float)
        pos = u_arr >= 0
        out = np.where(pos, self.beta * np.exp(-self.beta * np.where(pos, u_arr, 0.0)), 0.0)
        return _scalar_or_array(out, u_arr)

    def tail_integral(self, u):
        u_arr = np.asarray(u, dtype=float)
        pos = u_arr > 0
        out = np.where(pos, -np.expm1(-self.beta * np.where(pos, u_arr, 0.0)), 0.0)
        return _scalar_or_array(out, u_arr)

    def quantile(self, p):
        p_arr = np.asarray(p, dtype=float)
        out = -np.log1p(-p_arr) / self.beta
        return _scalar_or_array(out, p_arr)


@dataclass(frozen=True)
class EtasPowerLawKernel(TriggeringKernel):
    """Normalized power-law lag density g(u) = (rho-1) c^(rho-1) (u+c)^(-rho).

    The magnitude boost exp(a * (m - m0)) is deliberately NOT part of the
    density: callers fold it into the per-event productivity so the lag law
    stays magnitude-free (see :meth:`magnitude_factor`).
    """

    c: float
    rho: float
    a: float = 0.0
    m0: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.c) and self.c > 0):
            raise ValueError("c must be positive and finite")
        if not (math.isfinite(self.rho) and self.rho > 1):
            raise ValueError("rho must exceed 1 for a normalizable kernel")

    def evaluate(self, u):
        u_arr = np.asarray(u, dtype=float)
        pos = u_arr >= 0
        safe = np.where(pos, u_arr, 0.0)
        out = np.where(pos, (self.rho - 1.0) * self.c ** (self.rho - 1.0) * (safe + self.c) ** (-self.rho), 0.0)
        return _scalar_or_array(out, u_arr)

    def tail_integral(self, u):
        u_arr = np.asarray(u, dtype=float)
        pos = u_arr > 0
        safe = np.where(pos, u_arr, 0.0)
        out = np.where(pos, 1.0 - (self.c / (safe + self.c)) ** (self.rho - 1.0), 0.0)
        return _scalar_or_array(out, u_arr)

    def quantile(self, p):
        p_arr = np.asarray(p, dtype=float)
        out = self.c * ((1.0 - p_arr) ** (-1.0 / (self.rho - 1.0)) - 1.0)
        return _scalar_or_array(out, p_arr)

    def magnitude_factor(self, m):
        """Productivity boost exp(a * (m - m0)) for an event of magnitude m."""
        m_arr = np.asarray(m, dtype=float)
        out = np.exp(self.a * (m_arr - self.m0))
        return _scalar_or_array(out, m_arr)


@dataclass(frozen=True)
class HawkesParams:
    """Constant-productivity Hawkes parameters (background mu, productivity k)."""

    mu: float
    k: float
    kernel: TriggeringKernel

    def __post_init__(self):
        if not (math.isfinite(self.mu) and self.mu > 0):
            raise ValueError("mu must be positive")
        if not (math.isfinite(self.k) and self.k >= 0):
            raise ValueError("k must be nonnegative")

    @property
    def subcritical(self) -> bool:
        """False flags k >= 1, for which the process has no stationary regime."""
        return self.k < 1.0


@dataclass(frozen=True)
class ProductivityEstimate:
    """Per-event productivity estimates plus provenance flags.

    ``flags`` records which stabilization steps have been applied; raw
    estimates may be negative, truncated ones may not (unless a later
    negative-factor rescale flipped their sign, which is warned about at
    rescale time).
    """

    values: np.ndarray
    flags: frozenset = field(default_factory=lambda: frozenset({"raw"}))
    bandwidth: float | None = None

    def __post_init__(self):
        values = _frozen_array(np.atleast_1d(self.values))
        if values.ndim != 1:
            raise ValueError("values must be one-dimensional")
        flags = frozenset(self.flags)
        if not flags <= PIPELINE_FLAGS:
            raise ValueError(f"unknown pipeline flags: {sorted(flags - PIPELINE_FLAGS)}")
        if "truncated" in flags and "rescaled" not in flags and values.size and values.min() < 0:
            raise ValueError("truncated estimates must be nonnegative")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "flags", flags)

    @property
    def n(self) -> int:
        return int(self.values.size)

    def evolve(self, values=None, add_flags=(), bandwidth=None) -> "ProductivityEstimate":
        """Copy with new values and/or extra flags (provenance accumulates)."""
        return ProductivityEstimate(
            values=self.values if values is None else values,
            flags=self.flags | frozenset(add_flags),
            bandwidth=self.bandwidth if bandwidth is None else bandwidth,
        )


def conditional_intensity(catalog, mu, kernel, k, t, block: int = 1024):
    """Intensity lambda(t) = mu + sum_{tau_i < t} k_i * g(t - tau_i).

    ``k`` may be a scalar (constant productivity) or a vector aligned with the
    catalog.  ``t`` may be a scalar or an array; events at exactly t do not
    contribute (the sum is over strictly earlier events).
    """
    times = catalog.times
    k_arr = np.asarray(k, dtype=float)
    if k_arr.ndim == 0:
        k_arr = np.full(times.shape, float(k_arr))
    if k_arr.shape != times.shape:
        raise ValueError("productivity vector must align with the catalog")
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.full(t_arr.shape, float(mu))
    if times.size:
        for start in range(0, t_arr.size, block):
            tb = t_arr[start : start + block]
            lags = tb[:, None] - times[None, :]
            weights = np.where(lags > 0, kernel.evaluate(lags), 0.0)
            out[start : start + block] += weights @ k_arr
    return _scalar_or_array(out, np.asarray(t, dtype=float))


def intensity_function(catalog, mu, kernel, k):
    """Close over a fitted model: returns a vectorized callable t -> lambda(t)."""
    k_arr = np.array(np.broadcast_to(np.asarray(k, dtype=float), catalog.times.shape))

    def lam(t):
        return conditional_intensity(catalog, mu, kernel, k_arr, t)

    return lam
