"""Compute-time measurements and the r^2 cost model.

A patch scheme evaluates its RHS only inside patches, a fraction
``3 r^2`` of the domain area, at the price of the inter-patch coupling
work.  With ``T_M`` the per-state-variable micro RHS time and ``T_C``
the per-edge-value coupling time, the predicted ratio of one coupled
patch RHS evaluation to one matched-resolution full-domain RHS
evaluation is

    T_p/T_mu = (T_C/T_M) r^2 (24/n - 64/(3 n^2))
               + 3 r^2 (1 - 16/(9 n) + 8/(9 n^2))

(:func:`predicted_ratio`) -- both terms quadratic in the patch ratio r.

Methodology: monotonic clock, warm-up calls discarded, median of >= 20
samples with IQR dispersion, automatic batching for calls faster than
the timer can resolve.  Timing numbers are hardware-dependent; only the
scaling behaviour is asserted anywhere.  Full-domain comparisons run
directly while the matched grid stays under ``DIRECT_VARIABLE_LIMIT``
state variables; beyond that T_mu is extrapolated per-variable.
"""

from __future__ import annotations

import json
import math
import platform
import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .grid import MicroGridSpec, build_micro_grid
from .microscale import FullDomainState, PhysicalParams, full_domain_rhs
from .patchscheme import PatchScheme

DIRECT_VARIABLE_LIMIT = int(1e7)
MIN_SAMPLE_NS = 200_000  # batch calls until one sample takes at least this


def predicted_ratio(r: float, n: int, tc_over_tm: float) -> float:
    """Modelled compute-time ratio T_p/T_mu for one RHS evaluation."""
    if r <= 0 or n <= 0 or tc_over_tm < 0:
        raise ParameterError(
            f"need r > 0, n > 0, T_C/T_M >= 0; got r={r}, n={n}, ratio={tc_over_tm}"
        )
    coupling = tc_over_tm * r * r * (24.0 / n - 64.0 / (3.0 * n * n))
    micro = 3.0 * r * r * (1.0 - 16.0 / (9.0 * n) + 8.0 / (9.0 * n * n))
    return coupling + micro


def _cpu_model() -> str:
    try:
        with open("/proc/cpuinfo") as fh:
            for line in fh:
                if line.lower().startswith("model name"):
                    return line.split(":", 1)[1].strip()
    except OSError:
        pass
    return platform.processor() or "unknown"


def environment_info() -> dict:
    return {
        "cpu": _cpu_model(),
        "platform": platform.platform(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "note": "wall-clock medians; frequency scaling not controlled",
    }


@dataclass
class TimingReport:
    """Repeated wall-time measurements of one callable."""

    config: dict
    samples_ns: list[float]          # per-call times, warm-up discarded
    batch: int
    derived: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.samples_ns) < 20:
            raise ParameterError(
                f"timing needs >= 20 samples after warm-up, got {len(self.samples_ns)}"
            )
        if self.median_ns <= 0:
            raise ParameterError("timing samples must be positive")

    @property
    def median_ns(self) -> float:
        return statistics.median(self.samples_ns)

    @property
    def dispersion(self) -> float:
        """IQR / median; the declared spread of the samples."""
        qs = statistics.quantiles(self.samples_ns, n=4)
        return (qs[2] - qs[0]) / self.median_ns

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "batch": self.batch,
            "samples_ns": self.samples_ns,
            "median_ns": self.median_ns,
            "dispersion_iqr_over_median": self.dispersion,
            "derived": self.derived,
        }


def time_callable(fn, repeats: int = 30, warmup: int = 3) -> tuple[list[float], int]:
    """Median-friendly timing: warm up, auto-batch, sample per-call ns."""
    for _ in range(warmup):
        fn()
    t0 = time.perf_counter_ns()
    fn()
    probe = max(time.perf_counter_ns() - t0, 1)
    batch = max(1, math.ceil(MIN_SAMPLE_NS / probe))
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        for _ in range(batch):
            fn()
        samples.append((time.perf_counter_ns() - t0) / batch)
    return samples, batch


def measure_full_domain(
    spec: MicroGridSpec, params: PhysicalParams, repeats: int = 30
) -> TimingReport:
    """Median full-domain RHS call time and per-state-variable time T_M."""
    state = FullDomainState(
        np.random.default_rng(0).standard_normal(spec.state_count), spec
    )
    samples, batch = time_callable(
        lambda: full_domain_rhs(state, params), repeats=repeats
    )
    report = TimingReport(
        config={"grid": "full-domain", "n": spec.n, "L": spec.L, **environment_info()},
        samples_ns=samples,
        batch=batch,
    )
    report.derived = {
        "state_count": spec.state_count,
        "t_call_ns": report.median_ns,
        "t_per_variable_ns": report.median_ns / spec.state_count,
    }
    return report


def matched_full_grid_intervals(scheme: PatchScheme) -> int:
    """Interval count of the full-domain grid with the same delta."""
    n_full = round(scheme.spec.L / scheme.spec.delta)
    if n_full % 2:
        n_full += 1
    return n_full


def measure_patch(
    scheme: PatchScheme,
    repeats: int = 30,
    t_m_per_var_ns: float | None = None,
    direct_limit: int = DIRECT_VARIABLE_LIMIT,
) -> TimingReport:
    """Median coupled RHS time T_p and its ratio to the matched-delta T_mu.

    The matched full-domain grid is measured directly while it holds at
    most ``direct_limit`` state variables; beyond that T_mu is
    extrapolated as T_M x variable count using ``t_m_per_var_ns`` (the
    per-variable time from a direct measurement, required then).
    """
    x = np.random.default_rng(0).standard_normal(scheme.dim)
    samples, batch = time_callable(lambda: scheme.rhs_flat(x), repeats=repeats)
    report = TimingReport(
        config=scheme.describe() | environment_info(),
        samples_ns=samples,
        batch=batch,
    )
    n_full = matched_full_grid_intervals(scheme)
    vars_full = 3 * n_full * n_full // 4
    if vars_full <= direct_limit:
        full = measure_full_domain(
            build_micro_grid(n_full, scheme.spec.L), scheme.params, repeats=repeats
        )
        t_mu = full.median_ns
        source = "direct"
        t_m_per_var_ns = full.derived["t_per_variable_ns"]
    else:
        if t_m_per_var_ns is None:
            raise ParameterError(
                f"matched grid has {vars_full:.3g} variables (> {direct_limit:g}); "
                "pass t_m_per_var_ns from a direct measurement to extrapolate"
            )
        t_mu = t_m_per_var_ns * vars_full
        source = "extrapolated"
    report.derived = {
        "dim": scheme.dim,
        "t_p_ns": report.median_ns,
        "matched_full_intervals": n_full,
        "matched_full_variables": vars_full,
        "t_mu_ns": t_mu,
        "t_mu_source": source,
        "t_m_per_var_ns": t_m_per_var_ns,
        "ratio": report.median_ns / t_mu,
    }
    return report


@dataclass
class CostModelFit:
    """Least-squares (T_M, T_C) against the predicted-ratio model."""

    t_m_ns: float
    t_c_ns: float
    tc_over_tm: float
    r_squared: float
    residuals: list[float]           # relative, per configuration

    def to_dict(self) -> dict:
        return self.__dict__.copy()


def fit_cost_model(reports: list[TimingReport]) -> CostModelFit:
    """Fit (T_M, T_C) to measured patch/full ratios via the cost model.

    T_M comes from the direct full-domain per-variable measurements the
    reports already carry; T_C/T_M is the single linear coefficient left
    in the model, fitted by least squares on the measured ratios.
    """
    pts = [rep for rep in reports if "ratio" in rep.derived]
    if len(pts) < 4:
        raise ParameterError(
            f"cost-model fit needs >= 4 patch configurations, got {len(pts)}"
        )
    rs = {rep.config["r"] for rep in pts}
    if len(rs) < 2:
        raise ParameterError(
            "cost-model fit needs at least two distinct patch ratios r; "
            "a single-r design cannot separate the model terms"
        )
    a, b = [], []
    for rep in pts:
        r, n = rep.config["r"], rep.config["n"]
        a.append(r * r * (24.0 / n - 64.0 / (3.0 * n * n)))
        b.append(rep.derived["ratio"] - predicted_ratio(r, n, 0.0))
    a, b = np.array(a), np.array(b)
    x = max(float(a @ b / (a @ a)), 0.0)

    t_m = statistics.median(
        rep.derived["t_m_per_var_ns"] for rep in pts if rep.derived["t_m_per_var_ns"]
    )
    measured = np.array([rep.derived["ratio"] for rep in pts])
    modelled = np.array(
        [
            predicted_ratio(rep.config["r"], rep.config["n"], x)
            for rep in pts
        ]
    )
    resid = (measured - modelled) / measured
    ly, lm = np.log(measured), np.log(modelled)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum((ly - lm) ** 2)) / ss_tot
    return CostModelFit(
        t_m_ns=t_m,
        t_c_ns=x * t_m,
        tc_over_tm=x,
        r_squared=r2,
        residuals=[float(v) for v in resid],
    )


def write_bench_csv(path, reports: list[TimingReport], fit: CostModelFit | None):
    """Plot-ready measured-vs-predicted table plus a JSON manifest."""
    with open(path, "w") as fh:
        fh.write("scheme,N,n,r,t_p_ns,t_mu_ns,t_mu_source,ratio,predicted_ratio\n")
        for rep in reports:
            if "ratio" not in rep.derived:
                continue
            cfg, der = rep.config, rep.derived
            pred = (
                predicted_ratio(cfg["r"], cfg["n"], fit.tc_over_tm)
                if fit
                else ""
            )
            fh.write(
                f"{cfg['scheme']},{cfg['N']},{cfg['n']},{cfg['r']},"
                f"{der['t_p_ns']},{der['t_mu_ns']},{der['t_mu_source']},"
                f"{der['ratio']},{pred}\n"
            )


def write_bench_manifest(path, reports: list[TimingReport], fit: CostModelFit | None):
    payload = {
        "environment": environment_info(),
        "reports": [rep.to_dict() for rep in reports],
        "cost_model_fit": fit.to_dict() if fit else None,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
