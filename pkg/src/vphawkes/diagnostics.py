"""Goodness-of-fit via super-thinned residuals and uniformity bands.

Super-thinning keeps each observed point with probability min(1, b/lambda(t))
and superposes a Poisson process of rate (b - lambda)+ wherever the fitted
intensity falls below b.  Under the true model the residuals are homogeneous
Poisson with rate b, so their interevent times are exponential and the
exponential-CDF transform of the gaps is iid uniform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SuperThinResult",
    "UniformityBand",
    "super_thin",
    "standardized_interevent",
    "normalized_cumsum",
    "uniformity_band",
    "path_in_band",
    "rmse",
]


@dataclass(frozen=True)
class SuperThinResult:
    """Super-thinned residual point set.

    ``kept_original[k]`` is True when residual k is a retained data point and
    False when it was superposed.  ``standardized_u`` holds the exponential-CDF
    transform of the interevent gaps (first gap measured from the window
    start).
    """

    times: np.ndarray
    kept_original: np.ndarray
    standardized_u: np.ndarray
    b: float
    window_start: float
    window_end: float

    @property
    def m(self) -> int:
        return int(self.times.size)


def _gap_transform(times: np.ndarray, b: float, t0: float) -> np.ndarray:
    gaps = np.diff(times, prepend=t0)
    return -np.expm1(-b * gaps)


def super_thin(catalog, intensity_fn, b: float, rng_seed) -> SuperThinResult:
    """Super-thin ``catalog`` against fitted intensity ``intensity_fn`` at rate ``b``.

    Superposed points are produced by thinning a dominating rate-b Poisson
    process with acceptance probability 1 - lambda(t)/b (so no numerical
    integration of the intensity is needed).  Keep decisions and superposition
    draw from independent child streams of the seed: the kept/discarded
    pattern depends only on the seed and the catalog, not on how many
    candidate points get generated.
    """
    if not b > 0:
        raise ValueError("b must be positive")
    keep_rng, super_rng = [
        np.random.default_rng(s) for s in np.random.SeedSequence(rng_seed).spawn(2)
    ]
    t0, t1 = catalog.window_start, catalog.window_end

    lam_events = np.atleast_1d(np.asarray(intensity_fn(catalog.times), dtype=float))
    if lam_events.size and lam_events.min() <= 0:
        bad = int(np.argmin(lam_events))
        raise ValueError(f"nonpositive fitted intensity at event {bad}")
    keep = keep_rng.random(catalog.n) < np.minimum(1.0, b / lam_events) if catalog.n else np.zeros(0, bool)
    kept_times = catalog.times[keep]

    n_candidates = super_rng.poisson(b * (t1 - t0))
    candidates = np.sort(super_rng.uniform(t0, t1, size=n_candidates))
    if n_candidates:
        lam_cand = np.atleast_1d(np.asarray(intensity_fn(candidates), dtype=float))
        accept = super_rng.random(n_candidates) < np.maximum(0.0, 1.0 - lam_cand / b)
        superposed = candidates[accept]
    else:
        superposed = np.empty(0)

    times = np.concatenate([kept_times, superposed])
    flags = np.concatenate(
        [np.ones(kept_times.size, bool), np.zeros(superposed.size, bool)]
    )
    order = np.argsort(times, kind="stable")
    times = times[order]
    flags = flags[order]
    return SuperThinResult(
        times=times,
        kept_original=flags,
        standardized_u=_gap_transform(times, b, t0),
        b=float(b),
        window_start=float(t0),
        window_end=float(t1),
    )


def standardized_interevent(result: SuperThinResult) -> np.ndarray:
    """u_k = 1 - exp(-b * r_k) for gaps r_k of the residual times (t_0 = window start).

    Under a correctly fitted model the u_k are iid Uniform(0, 1).
    """
    return _gap_transform(result.times, result.b, result.window_start)


def normalized_cumsum(u) -> np.ndarray:
    """Cumulative sum of u divided by its total; the path compared to the band."""
    u = np.asarray(u, dtype=float)
    total = u.sum()
    if total <= 0:
        raise ValueError("u values must have positive sum")
    return np.cumsum(u) / total


@dataclass(frozen=True)
class UniformityBand:
    """Envelope for normalized cumulative-sum paths of m iid uniforms."""

    lower: np.ndarray
    upper: np.ndarray
    level: float
    method: str
    nsim: int

    @property
    def m(self) -> int:
        return int(self.lower.size)


def uniformity_band(
    m: int,
    nsim: int,
    level: float = 0.95,
    rng_seed=0,
    *,
    method: str = "simultaneous",
) -> UniformityBand:
    """Simulated band for normalized cumulative sums of m iid uniforms.

    ``method="pointwise"`` returns per-position quantiles (each position
    covers at rate ``level``; whole paths escape more often).
    ``method="simultaneous"`` is a rank envelope: the j-th smallest and
    largest simulated values at each position, with j chosen as deep as
    possible while at least ``level`` of the simulated paths stay entirely
    inside, so whole-path coverage is approximately ``level``.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    if nsim < 100:
        raise ValueError("need at least 100 simulations for a stable band")
    if method not in ("pointwise", "simultaneous"):
        raise ValueError("method must be 'pointwise' or 'simultaneous'")
    rng = np.random.default_rng(rng_seed)
    u = rng.random((nsim, m))
    paths = np.cumsum(u, axis=1)
    paths /= paths[:, -1][:, None]

    if method == "pointwise":
        alpha = 1.0 - level
        lower = np.quantile(paths, alpha / 2.0, axis=0)
        upper = np.quantile(paths, 1.0 - alpha / 2.0, axis=0)
        return UniformityBand(lower, upper, level, method, nsim)

    sorted_paths = np.sort(paths, axis=0)

    def coverage(depth: int) -> float:
        lo = sorted_paths[depth - 1]
        hi = sorted_paths[nsim - depth]
        inside = np.all((paths >= lo) & (paths <= hi), axis=1)
        return float(inside.mean())

    best = 1
    low, high = 1, nsim // 2
    while low <= high:
        mid = (low + high) // 2
        if coverage(mid) >= level:
            best = mid
            low = mid + 1
        else:
            high = mid - 1
    return UniformityBand(sorted_paths[best - 1], sorted_paths[nsim - best], level, method, nsim)


def path_in_band(path, band: UniformityBand) -> bool:
    """True when the whole path lies within the band (inclusive)."""
    path = np.asarray(path, dtype=float)
    if path.size != band.m:
        raise ValueError("path length does not match the band")
    return bool(np.all((path >= band.lower) & (path <= band.upper)))


def rmse(estimate, truth) -> float:
    """Root mean squared componentwise error."""
    a = np.asarray(estimate, dtype=float)
    b = np.asarray(truth, dtype=float)
    if a.shape != b.shape:
        raise ValueError("length mismatch")
    return float(np.sqrt(np.mean((a - b) ** 2)))
