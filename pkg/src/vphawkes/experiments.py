"""Scripted simulation studies: the five time-varying productivity scenarios
with their RMSE benchmark table, the intensity-noise sensitivity study, and
the magnitude-productivity (ETAS) study.

Each replicate owns its RNG stream (base seed + replicate index) and results
are accumulated in replicate order, so every run is reproducible bit for bit.
Reference RMSE values from the original benchmark table are bundled for the
``--check`` mode; scenario rows that blow past their tolerance bands indicate
a regression in the estimators or the pipeline.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import spearmanr

from .core import ExponentialKernel, conditional_intensity
from .diagnostics import rmse
from .estimate import (
    SingularMatrixError,
    build_triggering_matrix,
    empirical_productivities,
    mle_productivities,
)
from .simulate import (
    ConstantProductivity,
    MagnitudeDistribution,
    RenewalProductivity,
    TimeProductivity,
    simulate_etas,
    simulate_variable_hawkes,
)
from .stabilize import (
    SmootherConfig,
    ZeroSumError,
    rescale_total,
    smooth_by_mark,
    stabilize_pipeline,
    truncate_nonneg,
)

__all__ = [
    "ExperimentConfig",
    "ScenarioResult",
    "NoiseSensitivityResult",
    "EtasMagnitudeResult",
    "TABLE_SCENARIOS",
    "REFERENCE_TABLE_RMSE",
    "REFERENCE_ETAS_RMSE",
    "NOISE_STUDY_SEED",
    "ETAS_CONFIG",
    "scenario_true_k",
    "run_scenario",
    "run_noise_sensitivity",
    "run_etas_magnitude",
    "check_table_row",
]

TABLE_SCENARIOS = ("normals", "exponential", "constant", "cauchy", "renewal")

# Benchmark targets (mean RMSE over 1000 replicates) for the three estimator
# pipelines: unscaled empirical, closed-form solve, scaled empirical.
REFERENCE_TABLE_RMSE = {
    "normals": (1.75, 0.187, 0.0925),
    "exponential": (1.90, 0.171, 0.0912),
    "constant": (1.08, 0.121, 0.0570),
    "cauchy": (1.23, 0.210, 0.188),
    "renewal": (1.14, 0.761, 0.626),
}
REFERENCE_ETAS_RMSE = (1.56, 0.926)  # (closed-form pipeline, empirical pipeline)

NOISE_STUDY_SEED = 20260810

ETAS_CONFIG = {
    "mu": 0.1,
    "beta": 2.7,
    "base": 0.2,
    "a": 1.2,
    "m0": 3.5,
    "mag_rate": 2.3,
}


def _normal_pdf(x, loc, scale):
    z = (np.asarray(x, dtype=float) - loc) / scale
    return np.exp(-0.5 * z * z) / (scale * math.sqrt(2.0 * math.pi))


def _cauchy_pdf(x, loc, scale):
    d = np.asarray(x, dtype=float) - loc
    return scale / (math.pi * (scale * scale + d * d))


def normals_productivity(t):
    return 80.0 * _normal_pdf(t, 200.0, 60.0) + 40.0 * _normal_pdf(t, 800.0, 70.0)


def exponential_productivity(t):
    # Decaying productivity 0.7 * exp(-0.007 t): the decay sign is forced by
    # stability (exponential growth to ~768 at t=1000 would be supercritical
    # and the benchmark RMSE magnitudes would be impossible).
    return 0.7 * np.exp(-0.007 * np.asarray(t, dtype=float))


def constant_productivity(t):
    return np.full_like(np.asarray(t, dtype=float), 0.01)


def cauchy_productivity(t):
    return 100.0 * _cauchy_pdf(t, 700.0, 100.0)


def renewal_productivity(gap):
    return 4.0 * _normal_pdf(gap, 5.0, 1.0)


_SCENARIO_SPECS = {
    "normals": lambda: TimeProductivity(normals_productivity),
    "exponential": lambda: TimeProductivity(exponential_productivity),
    "constant": lambda: ConstantProductivity(0.01),
    "cauchy": lambda: TimeProductivity(cauchy_productivity),
    "renewal": lambda: RenewalProductivity(renewal_productivity),
}


def scenario_true_k(scenario: str):
    """The true productivity function of a table scenario (time or gap domain)."""
    return {
        "normals": normals_productivity,
        "exponential": exponential_productivity,
        "constant": constant_productivity,
        "cauchy": cauchy_productivity,
        "renewal": renewal_productivity,
    }[scenario]


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    replicates: int = 100
    t_end: float = 1000.0
    seed: int = 0
    mu: float = 0.5
    beta: float = 0.7
    delta: float = 7.0
    smoother: SmootherConfig = field(default_factory=SmootherConfig)
    ridge: float = 0.0
    max_events: int = 10**6

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("need at least one replicate")


def default_config(scenario: str, **overrides) -> ExperimentConfig:
    """Config with the benchmark defaults for ``scenario`` (mu, beta, T)."""
    base = {"scenario": scenario}
    if scenario == "etas":
        base.update(mu=ETAS_CONFIG["mu"], beta=ETAS_CONFIG["beta"], replicates=10)
    base.update(overrides)
    return ExperimentConfig(**base)


@dataclass(frozen=True)
class ScenarioResult:
    """Per-replicate RMSEs for one scenario; NaN rows mark failed replicates."""

    scenario: str
    replicates: int
    failures: int
    failure_reasons: tuple
    rmse_empirical_unscaled: np.ndarray
    rmse_mle_pipeline: np.ndarray
    rmse_empirical_scaled: np.ndarray
    rmse_mle_raw: np.ndarray
    rmse_mle_trunc_smooth: np.ndarray
    counts: np.ndarray

    def means(self) -> tuple[float, float, float]:
        return (
            float(np.nanmean(self.rmse_empirical_unscaled)),
            float(np.nanmean(self.rmse_mle_pipeline)),
            float(np.nanmean(self.rmse_empirical_scaled)),
        )

    def summary(self) -> str:
        m = self.means()
        sd = (
            float(np.nanstd(self.rmse_empirical_unscaled)),
            float(np.nanstd(self.rmse_mle_pipeline)),
            float(np.nanstd(self.rmse_empirical_scaled)),
        )
        lines = [
            f"scenario {self.scenario}: {self.replicates} replicates, "
            f"{self.failures} failed (singular/degenerate)",
            f"  unscaled empirical RMSE  {m[0]:.4g} (sd {sd[0]:.3g})",
            f"  closed-form pipeline RMSE {m[1]:.4g} (sd {sd[1]:.3g})",
            f"  scaled empirical RMSE    {m[2]:.4g} (sd {sd[2]:.3g})",
        ]
        return "\n".join(lines)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                [
                    "replicate",
                    "n_events",
                    "rmse_empirical_unscaled",
                    "rmse_mle_pipeline",
                    "rmse_empirical_scaled",
                    "rmse_mle_raw",
                    "rmse_mle_trunc_smooth",
                ]
            )
            for i in range(self.replicates):
                writer.writerow(
                    [
                        i,
                        int(self.counts[i]),
                        self.rmse_empirical_unscaled[i],
                        self.rmse_mle_pipeline[i],
                        self.rmse_empirical_scaled[i],
                        self.rmse_mle_raw[i],
                        self.rmse_mle_trunc_smooth[i],
                    ]
                )


def run_scenario(cfg: ExperimentConfig) -> ScenarioResult:
    """Simulate, estimate, stabilize, and score one table scenario."""
    if cfg.scenario not in TABLE_SCENARIOS:
        raise ValueError(f"unknown table scenario: {cfg.scenario!r}")
    kernel = ExponentialKernel(cfg.beta)
    cols = {
        name: np.full(cfg.replicates, np.nan)
        for name in ("emp_un", "mle", "emp_sc", "mle_raw", "mle_ts")
    }
    counts = np.zeros(cfg.replicates)
    reasons = []

    for rep in range(cfg.replicates):
        catalog, true_k = simulate_variable_hawkes(
            cfg.mu,
            kernel,
            _SCENARIO_SPECS[cfg.scenario](),
            cfg.t_end,
            rng_seed=[cfg.seed, rep],
            max_events=cfg.max_events,
        )
        counts[rep] = catalog.n
        if catalog.n < 3:
            reasons.append((rep, "too few events"))
            continue
        try:
            with warnings.catch_warnings():
                # Negative n - mu*T replicates are routine in the benchmark.
                warnings.simplefilter("ignore", RuntimeWarning)
                raw = mle_productivities(catalog, cfg.mu, kernel, ridge=cfg.ridge)
                ts = stabilize_pipeline(
                    raw, catalog, cfg.mu, cfg.smoother, order=("truncate", "smooth")
                )
                tsr = rescale_total(ts, catalog.n, cfg.mu, catalog.duration)
                emp = empirical_productivities(catalog, cfg.delta, cfg.mu)
                emp_ts = stabilize_pipeline(
                    emp, catalog, cfg.mu, cfg.smoother, order=("truncate", "smooth")
                )
                emp_tsr = rescale_total(emp_ts, catalog.n, cfg.mu, catalog.duration)
        except (SingularMatrixError, ZeroSumError) as exc:
            reasons.append((rep, type(exc).__name__))
            continue
        cols["emp_un"][rep] = rmse(emp_ts.values, true_k)
        cols["mle"][rep] = rmse(tsr.values, true_k)
        cols["emp_sc"][rep] = rmse(emp_tsr.values, true_k)
        cols["mle_raw"][rep] = rmse(raw.values, true_k)
        cols["mle_ts"][rep] = rmse(ts.values, true_k)

    return ScenarioResult(
        scenario=cfg.scenario,
        replicates=cfg.replicates,
        failures=len(reasons),
        failure_reasons=tuple(reasons),
        rmse_empirical_unscaled=cols["emp_un"],
        rmse_mle_pipeline=cols["mle"],
        rmse_empirical_scaled=cols["emp_sc"],
        rmse_mle_raw=cols["mle_raw"],
        rmse_mle_trunc_smooth=cols["mle_ts"],
        counts=counts,
    )


def check_table_row(result: ScenarioResult) -> list[tuple[str, bool, str]]:
    """Tolerance checks against the bundled reference RMSEs.

    The three well-behaved rows (normals, exponential, constant) must land
    within +-50% of the reference on every column and preserve the strict
    ordering unscaled-empirical > closed-form > scaled-empirical; the noisier
    cauchy and renewal rows check the last two columns at +-60%.
    """
    ref = REFERENCE_TABLE_RMSE[result.scenario]
    got = result.means()
    checks = []
    tight = result.scenario in ("normals", "exponential", "constant")
    tol = 0.5 if tight else 0.6
    cols = ("unscaled empirical", "closed-form", "scaled empirical")
    for j in range(3):
        if not tight and j == 0:
            continue
        lo, hi = (1 - tol) * ref[j], (1 + tol) * ref[j]
        ok = lo <= got[j] <= hi
        checks.append(
            (
                f"{result.scenario}/{cols[j]}",
                ok,
                f"got {got[j]:.4g}, reference {ref[j]:.4g}, allowed [{lo:.4g}, {hi:.4g}]",
            )
        )
    if tight:
        ok = got[0] > got[1] > got[2]
        checks.append(
            (
                f"{result.scenario}/ordering",
                ok,
                f"unscaled {got[0]:.4g} > closed-form {got[1]:.4g} > scaled {got[2]:.4g}",
            )
        )
    return checks


@dataclass(frozen=True)
class NoiseSensitivityResult:
    sigma: np.ndarray
    lambda_rmse: np.ndarray
    k_rmse: np.ndarray
    n_events: int

    def spearman(self) -> float:
        return float(spearmanr(self.lambda_rmse, self.k_rmse).statistic)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sigma", "lambda_rmse", "k_rmse"])
            for row in zip(self.sigma, self.lambda_rmse, self.k_rmse):
                writer.writerow(row)


def run_noise_sensitivity(cfg: ExperimentConfig, sigma_grid) -> NoiseSensitivityResult:
    """Perturb the true intensities with iid noise and re-solve for productivities.

    Uses one frozen catalog (module seed constant) so the study is exactly
    reproducible.  For each sigma the true intensities at the events get iid
    N(0, sigma^2) noise, the linear system lambda = mu + G^T k is solved by
    forward substitution, and both RMS errors are reported.
    """
    from scipy.linalg import solve_triangular

    kernel = ExponentialKernel(cfg.beta)
    catalog, true_k = simulate_variable_hawkes(
        cfg.mu,
        kernel,
        _SCENARIO_SPECS["normals"](),
        cfg.t_end,
        rng_seed=NOISE_STUDY_SEED,
        max_events=cfg.max_events,
    )
    lam_true = np.atleast_1d(
        conditional_intensity(catalog, cfg.mu, kernel, true_k, catalog.times)
    )
    g = build_triggering_matrix(catalog, kernel).matrix
    sigma_grid = np.asarray(sigma_grid, dtype=float)
    lam_err = np.empty(sigma_grid.size)
    k_err = np.empty(sigma_grid.size)
    for i, sigma in enumerate(sigma_grid):
        rng = np.random.default_rng([NOISE_STUDY_SEED, i])
        noisy = lam_true + sigma * rng.standard_normal(lam_true.size)
        k_hat = solve_triangular(g, noisy[1:] - cfg.mu, trans="T", lower=False)
        k_full = np.append(k_hat, 0.0)
        lam_err[i] = rmse(noisy, lam_true)
        k_err[i] = rmse(k_full, true_k)
    return NoiseSensitivityResult(sigma_grid, lam_err, k_err, catalog.n)


@dataclass(frozen=True)
class EtasMagnitudeResult:
    grid: np.ndarray
    true_curve: np.ndarray
    mle_curves: np.ndarray
    empirical_curves: np.ndarray
    rmse_mle: np.ndarray
    rmse_empirical: np.ndarray

    @property
    def mean_mle_curve(self) -> np.ndarray:
        return self.mle_curves.mean(axis=0)

    @property
    def mean_empirical_curve(self) -> np.ndarray:
        return self.empirical_curves.mean(axis=0)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["magnitude", "true_k", "mean_mle_k", "mean_empirical_k"])
            for row in zip(
                self.grid, self.true_curve, self.mean_mle_curve, self.mean_empirical_curve
            ):
                writer.writerow(row)


def run_etas_magnitude(cfg: ExperimentConfig, *, grid_step: float = 0.05) -> EtasMagnitudeResult:
    """Recover productivity-vs-magnitude curves from simulated ETAS catalogs.

    Both estimators see only the event times; the magnitudes enter solely as
    the smoothing coordinate, so any recovered trend is genuinely learned from
    the temporal clustering.
    """
    p = ETAS_CONFIG
    kernel = ExponentialKernel(p["beta"])
    mags = MagnitudeDistribution(p["mag_rate"], p["m0"])
    catalogs = [
        simulate_etas(
            p["mu"], kernel, p["base"], p["a"], mags, cfg.t_end,
            rng_seed=[cfg.seed, rep], max_events=cfg.max_events,
        )
        for rep in range(cfg.replicates)
    ]
    m_max = max(float(c.marks.max()) for c in catalogs)
    grid = np.arange(p["m0"], m_max + 0.5 * grid_step, grid_step)
    true_curve = p["base"] * np.exp(p["a"] * (grid - p["m0"]))

    mark_cfg = SmootherConfig(
        bandwidth=cfg.smoother.bandwidth,
        domain="mark",
        grid=(p["m0"], m_max, grid_step),
        silverman_exponent=cfg.smoother.silverman_exponent,
    )
    mle_curves = np.empty((cfg.replicates, grid.size))
    emp_curves = np.empty((cfg.replicates, grid.size))
    rmse_mle = np.empty(cfg.replicates)
    rmse_emp = np.empty(cfg.replicates)
    for rep, catalog in enumerate(catalogs):
        raw = mle_productivities(catalog, p["mu"], kernel, ridge=cfg.ridge)
        curve = smooth_by_mark(
            truncate_nonneg(raw), catalog.marks, mark_cfg, p["mu"], catalog.duration
        )
        emp = empirical_productivities(catalog, cfg.delta, p["mu"])
        emp_curve = smooth_by_mark(
            truncate_nonneg(emp), catalog.marks, mark_cfg, p["mu"], catalog.duration
        )
        mle_curves[rep] = curve.values
        emp_curves[rep] = emp_curve.values
        rmse_mle[rep] = rmse(curve.values, true_curve)
        rmse_emp[rep] = rmse(emp_curve.values, true_curve)
    return EtasMagnitudeResult(
        grid=grid,
        true_curve=true_curve,
        mle_curves=mle_curves,
        empirical_curves=emp_curves,
        rmse_mle=rmse_mle,
        rmse_empirical=rmse_emp,
    )
