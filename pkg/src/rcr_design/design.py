"""Optimal treatment-group weights, efficiencies, rounding, and parameter sweeps.

Estimation weights have closed forms for all three criteria, as do the
two-group prediction weights for D and E.  The A-criterion for prediction has
no closed-form minimizer and is handled by golden-section search over the open
weight interval, guarded by a grid unimodality diagnostic.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import criteria, moments
from .criteria import CriterionSpec
from .model import ExactDesign, ModelConfig

CLOSED_FORM = "closed_form"
NUMERIC = "numeric"

U_LARGE = "u_large"
V_LARGE = "v_large"
BOTH_LARGE = "both_large"

INTERVAL_MARGIN = 1e-9
GOLDEN_TOL = 1e-10
RHO_LOW = 1e-6
RHO_HIGH = 0.9999

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_minimize(f, lo: float, hi: float, tol: float = GOLDEN_TOL) -> float:
    """Minimize a unimodal function on [lo, hi] to absolute x-tolerance tol."""
    if not lo < hi:
        raise ValueError(f"need lo < hi, got [{lo}, {hi}]")
    a, b = float(lo), float(hi)
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def _check_unimodal(f, lo: float, hi: float, samples: int = 65):
    """Reject criteria that show more than one valley on a coarse grid."""
    xs = np.linspace(lo, hi, samples)
    ys = np.array([f(x) for x in xs])
    interior = np.flatnonzero((ys[1:-1] <= ys[:-2]) & (ys[1:-1] <= ys[2:]))
    valleys = 0 if interior.size == 0 else int(np.count_nonzero(np.diff(interior) > 1)) + 1
    if valleys > 1:
        raise RuntimeError(
            "criterion is not unimodal on the search grid; "
            "refusing to trust the numeric minimizer"
        )


def minimize_criterion_weight(config: ModelConfig, spec: CriterionSpec) -> float:
    """Golden-section minimizer of any criterion over the open weight interval."""
    lo = INTERVAL_MARGIN
    hi = 1.0 / (config.J - 1) - INTERVAL_MARGIN

    def f(w):
        return criteria.criterion_value(config, spec, w)

    _check_unimodal(f, lo, hi)
    return golden_section_minimize(f, lo, hi, GOLDEN_TOL)


@dataclass(frozen=True)
class OptimalDesignResult:
    """Best treatment-group weight together with its criterion value."""

    w_star: float
    criterion_value: float
    method: str
    spec: CriterionSpec


def optimal_weight(config: ModelConfig, spec: CriterionSpec) -> OptimalDesignResult:
    """Optimal treatment-group weight for the given criterion and target."""
    criteria.require_two_group_prediction(spec, config.J)
    J, K, N = config.J, config.K, config.N
    u, v = config.u, config.v
    ku1 = K * u + 1.0
    kuv1 = K * (v + u) + 1.0
    method = CLOSED_FORM

    if spec.target == "estimation":
        if spec.criterion == "A":
            w = 1.0 / (J - 1 + math.sqrt(J - 1.0) * math.sqrt(ku1 / kuv1))
        elif spec.criterion == "D":
            z = math.sqrt(4.0 * (J - 1) * K * v / ku1 + J * J)
            w = (J - 2 + z) / ((J - 1) * (J + z))
        else:
            w = 1.0 / ((J - 1) * (1.0 + math.sqrt(ku1 / kuv1)))
    elif spec.criterion == "A":
        w = minimize_criterion_weight(config, spec)
        method = NUMERIC
    elif spec.criterion == "D":
        t = math.log(ku1 / kuv1)  # negative: treated individuals carry more variance
        w = 1.0 / (N * t) + 0.5 + math.sqrt(1.0 / (N * t) ** 2 + 0.25)
    else:
        w = (K * (2.0 * u + v) + 2.0) / (K * (4.0 * u + v) + 4.0)

    return OptimalDesignResult(w, criteria.criterion_value(config, spec, w), method, spec)


def limiting_weight(spec: CriterionSpec, J: int, regime: str,
                    b: float | None = None, N: int | None = None) -> float:
    """Limit of the optimal weight in the extreme-variance regimes.

    u_large: dominant intercept variance, the fixed-effects-model weight.
    v_large: dominant effect variance, all observations go to the treatments.
    both_large: both variances grow with fixed ratio b = v/u; the D-prediction
    limit additionally needs the total sample size N.
    """
    if regime == U_LARGE:
        return criteria.fixed_effects_criterion_weight(spec, J)
    if regime == V_LARGE:
        return 1.0 / (J - 1)
    if regime != BOTH_LARGE:
        raise ValueError(f"unknown regime {regime!r}")
    if b is None or b <= 0:
        raise ValueError("regime 'both_large' needs a positive variance ratio b")
    if spec.target == "estimation":
        if spec.criterion == "A":
            return 1.0 / (J - 1 + math.sqrt((J - 1) / (1.0 + b)))
        if spec.criterion == "D":
            z = math.sqrt(4.0 * (J - 1) * b + J * J)
            return (J - 2 + z) / ((J - 1) * (J + z))
        return 1.0 / ((J - 1) * (1.0 + math.sqrt(1.0 / (1.0 + b))))
    if J != 2:
        raise ValueError(f"prediction limits are only available for J=2, got J={J}")
    if spec.criterion == "D":
        if N is None:
            raise ValueError("the D-prediction limit depends on N")
        t = math.log(1.0 + b)
        return -1.0 / (N * t) + 0.5 + math.sqrt(1.0 / (N * t) ** 2 + 0.25)
    if spec.criterion == "E":
        return (2.0 / b + 1.0) / (4.0 / b + 1.0)
    raise ValueError("the A-prediction weight has no closed-form limit")


def efficiency(config: ModelConfig, spec: CriterionSpec, w: float) -> float:
    """Criterion efficiency of weight w relative to the optimum, 1 at the optimum.

    A and E values are positively homogeneous in the allocation, so the plain
    value ratio applies; D aggregates a log determinant, so the gap is scaled
    back by the matrix dimension before exponentiating.
    """
    w = criteria.check_weight(w, config.J)
    best = optimal_weight(config, spec)
    value = criteria.criterion_value(config, spec, w)
    if spec.criterion == "D":
        dim = (config.J - 1) * (config.N if spec.target == "prediction" else 1)
        return math.exp((best.criterion_value - value) / dim)
    return best.criterion_value / value


def exact_criterion_value(config: ModelConfig, spec: CriterionSpec, n: int, m: int) -> float:
    """Criterion value of an integer design, computed from the moment matrices."""
    criteria.require_two_group_prediction(spec, config.J)
    if spec.target == "estimation":
        entries = moments.cov_blue(config, n, m).entries
        if spec.criterion == "A":
            return float(np.trace(entries))
        if spec.criterion == "D":
            sign, logdet = np.linalg.slogdet(entries)
            if sign <= 0:
                raise np.linalg.LinAlgError("estimator covariance is not positive definite")
            return float(logdet)
        return float(np.linalg.eigvalsh(entries)[-1])
    if spec.criterion == "A":
        return float(np.trace(moments.mse_blup(config, n, m).entries))
    spectrum = moments.eig_mse_two_group(config, n, m)
    if spec.criterion == "D":
        return float(np.sum(spectrum.multiplicities * np.log(spectrum.values)))
    return float(spectrum.values[0])


def round_to_exact(config: ModelConfig, spec: CriterionSpec, w: float) -> ExactDesign:
    """Round a continuous weight to the better of its two neighbouring integer designs.

    Candidates are floor(N w) and ceil(N w) clamped to feasibility (at least
    one individual in every group); ties go to the smaller treatment size.
    """
    w = criteria.check_weight(w, config.J)
    J, N = config.J, config.N
    n_max = (N - 1) // (J - 1)
    candidates = {
        min(max(int(c), 1), n_max) for c in (math.floor(N * w), math.ceil(N * w))
    }
    best_n, best_value = -1, math.inf
    for n in sorted(candidates):
        value = exact_criterion_value(config, spec, n, N - (J - 1) * n)
        if value < best_value:
            best_n, best_value = n, value
    return ExactDesign(n=best_n, m=N - (J - 1) * best_n, J=J)


@dataclass(frozen=True)
class SweepRow:
    """One point of a variance-parameter sweep."""

    rho: float
    b: float
    w_star: float
    criterion_value: float
    efficiency_fixed: float


SWEEP_HEADER = "rho,b,w_star,criterion_value,efficiency_fixed"


def default_rho_grid(points: int) -> np.ndarray:
    """Evenly spaced rho values with proxy endpoints for the open interval (0, 1)."""
    if points < 2:
        raise ValueError(f"need at least two grid points, got {points}")
    return np.linspace(RHO_LOW, RHO_HIGH, points)


def sweep(config: ModelConfig, spec: CriterionSpec, b: float, rho_grid,
          threads: int = 1) -> list[SweepRow]:
    """Optimal weight and fixed-model efficiency across a variance-parameter grid.

    For each rho the variance ratios are rebuilt as v = rho/(1-rho), u = v/b,
    so the whole curve shares J, N, K and sigma2 with the template config.
    Rows keep the grid order regardless of the thread count.
    """
    rho_grid = np.atleast_1d(np.asarray(rho_grid, dtype=float))
    if rho_grid.size == 0:
        raise ValueError("empty rho grid")
    if np.any((rho_grid <= 0.0) | (rho_grid >= 1.0)):
        raise ValueError("rho values must lie strictly inside (0, 1)")
    if b <= 0:
        raise ValueError("variance ratio b must be positive")
    w_fixed = criteria.fixed_effects_criterion_weight(spec, config.J)

    def row(rho: float) -> SweepRow:
        v = rho / (1.0 - rho)
        cfg = replace(config, u=v / b, v=v)
        best = optimal_weight(cfg, spec)
        eff = efficiency(cfg, spec, w_fixed)
        return SweepRow(float(rho), float(b), best.w_star, best.criterion_value, eff)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(row, rho_grid))
    return [row(rho) for rho in rho_grid]


def write_sweep_csv(rows, fh):
    """Write sweep rows as CSV with 10 significant digits."""
    fh.write(SWEEP_HEADER + "\n")
    for r in rows:
        fields = (r.rho, r.b, r.w_star, r.criterion_value, r.efficiency_fixed)
        fh.write(",".join(f"{x:.10g}" for x in fields) + "\n")
