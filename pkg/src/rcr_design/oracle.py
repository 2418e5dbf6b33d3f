"""Independent ground truth for the closed-form results.

This module solves the model through the generic mixed-model machinery only:
generalized least squares on the marginal covariance, the partitioned error
covariance of the joint estimator/predictor, a plain numeric eigensolver, and
a seeded Monte Carlo study.  None of it reuses the closed-form shortcuts, so
agreement between the two paths is meaningful evidence.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.linalg import block_diag, cho_factor, cho_solve

from . import moments
from .estimation import (
    ObservationSet, blue, blup, group_means_from_individuals, predict_from_means,
)
from .model import ExactDesign, MixedModelSystem, ModelConfig, build_system
from .moments import EigenSpectrum, MomentMatrix

MAX_CONDITION = 1e12

SOLVER_TOL = 1e-10
BLOCK_TOL = 1e-10
TWO_GROUP_TOL = 1e-12
EIGEN_TOL = 1e-9


@dataclass(frozen=True)
class HendersonSolution:
    """Fixed-effects estimate and random-effects prediction from one joint fit."""

    beta_hat: np.ndarray
    gamma_hat: np.ndarray


@dataclass(frozen=True)
class PartitionedMse:
    """Blocks of the joint estimator/predictor error covariance."""

    c11: np.ndarray
    c12: np.ndarray
    c22: np.ndarray

    def assembled(self) -> np.ndarray:
        return np.block([[self.c11, self.c12], [self.c12.T, self.c22]])


def _spd_factor(matrix: np.ndarray, what: str):
    """Cholesky factor with an explicit conditioning guard."""
    eigs = np.linalg.eigvalsh(matrix)
    cond = np.inf if eigs[0] <= 0 else eigs[-1] / eigs[0]
    if cond > MAX_CONDITION:
        raise np.linalg.LinAlgError(
            f"{what} is not safely positive definite (condition number {cond:.3g})"
        )
    return cho_factor(matrix, lower=True)


def _require_full_rank(X: np.ndarray):
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise np.linalg.LinAlgError("fixed-effects design matrix is rank deficient")


def henderson_solve(system: MixedModelSystem) -> HendersonSolution:
    """Generalized least squares plus shrunken random effects.

    Works directly on the marginal covariance V = Z G Z' + R; nothing about
    the balanced multi-group layout is assumed.
    """
    if system.Y is None:
        raise ValueError("system carries no observation vector")
    X, Z, G, R, Y = system.X, system.Z, system.G, system.R, system.Y
    _require_full_rank(X)
    vf = _spd_factor(Z @ G @ Z.T + R, "marginal covariance")
    vinv_x = cho_solve(vf, X)
    beta = np.linalg.solve(X.T @ vinv_x, vinv_x.T @ Y)
    gamma = G @ Z.T @ cho_solve(vf, Y - X @ beta)
    return HendersonSolution(beta, gamma)


def _joint_normal_equations(system: MixedModelSystem):
    X, Z, G, R = system.X, system.Z, system.G, system.R
    rf = _spd_factor(R, "error covariance")
    rinv_x = cho_solve(rf, X)
    rinv_z = cho_solve(rf, Z)
    coefficients = np.block([
        [X.T @ rinv_x, X.T @ rinv_z],
        [Z.T @ rinv_x, Z.T @ rinv_z + np.linalg.inv(G)],
    ])
    return coefficients, rinv_x, rinv_z


def henderson_solve_joint(system: MixedModelSystem) -> HendersonSolution:
    """Single solve of the stacked normal equations; cross-check for the two-step path."""
    if system.Y is None:
        raise ValueError("system carries no observation vector")
    _require_full_rank(system.X)
    coefficients, rinv_x, rinv_z = _joint_normal_equations(system)
    rhs = np.concatenate([rinv_x.T @ system.Y, rinv_z.T @ system.Y])
    solution = np.linalg.solve(coefficients, rhs)
    p = system.X.shape[1]
    return HendersonSolution(solution[:p], solution[p:])


def mixed_equation_residual(system: MixedModelSystem, solution: HendersonSolution) -> float:
    """Relative residual of the stacked normal equations at a candidate solution."""
    coefficients, rinv_x, rinv_z = _joint_normal_equations(system)
    rhs = np.concatenate([rinv_x.T @ system.Y, rinv_z.T @ system.Y])
    stacked = np.concatenate([solution.beta_hat, solution.gamma_hat])
    residual = coefficients @ stacked - rhs
    return float(np.linalg.norm(residual) / max(np.linalg.norm(rhs), 1e-300))


def henderson_mse(system: MixedModelSystem) -> PartitionedMse:
    """Partitioned error covariance of the joint estimator/predictor."""
    X, Z, G, R = system.X, system.Z, system.G, system.R
    _require_full_rank(X)
    vf = _spd_factor(Z @ G @ Z.T + R, "marginal covariance")
    c11 = np.linalg.inv(X.T @ cho_solve(vf, X))
    rf = _spd_factor(R, "error covariance")
    rinv_x = cho_solve(rf, X)
    rinv_z = cho_solve(rf, Z)
    inner = Z.T @ rinv_z + np.linalg.inv(G)
    schur = inner - Z.T @ rinv_x @ np.linalg.solve(X.T @ rinv_x, X.T @ rinv_z)
    c22 = np.linalg.inv(schur)
    c12 = -c11 @ (X.T @ rinv_z) @ np.linalg.inv(inner)
    return PartitionedMse(c11, c12, c22)


def partitioned_mse_closed_form(config: ModelConfig, design: ExactDesign) -> PartitionedMse:
    """The same partition written out for the balanced multi-group layout.

    Every block is rank-one structure over group blocks: centering matrices
    within groups and outer products of per-group coefficient vectors.
    """
    if design.J != config.J or design.N != config.N:
        raise ValueError("design inconsistent with config")
    J, K = config.J, config.K
    n, m = design.n, design.m
    u, v, s2 = config.u, config.v, config.sigma2
    p = J - 1
    ku1 = K * u + 1.0
    kuv1 = K * (v + u) + 1.0

    c11 = s2 * ku1 / (K * m) * np.block([
        [np.ones((1, 1)), -np.ones((1, p))],
        [-np.ones((p, 1)), kuv1 * m / (ku1 * n) * np.eye(p) + np.ones((p, p))],
    ])

    per_individual = np.diag([u] + [v] * p)
    effect = np.eye(p)
    center_n = np.eye(n) - np.ones((n, n)) / n
    slopes = [np.concatenate([[u], v * effect[j]]) for j in range(p)]
    c221 = np.kron(np.eye(n * p), per_individual) - K / kuv1 * block_diag(
        *[np.kron(center_n, np.outer(g, g)) for g in slopes]
    )
    intercept_only = np.concatenate([[u], np.zeros(p)])
    center_m = np.eye(m) - np.ones((m, m)) / m
    c222 = np.kron(np.eye(m), per_individual) - K / ku1 * np.kron(
        center_m, np.outer(intercept_only, intercept_only)
    )
    c22 = s2 * block_diag(c221, c222)

    picks = [np.concatenate([[0.0], effect[j]]) for j in range(p)]
    c121 = np.hstack(
        [np.kron(np.ones((1, n)) / n, np.outer(q, g)) for q, g in zip(picks, slopes)]
    )
    contrast = np.concatenate([[1.0], -np.ones(p)])
    c122 = np.kron(np.ones((1, m)) / m, np.outer(contrast, intercept_only))
    c12 = -s2 * np.hstack([c121, c122])
    return PartitionedMse(c11, c12, c22)


def effect_selector(J: int) -> np.ndarray:
    """Matrix picking the treatment-effect coordinates of one (mu, alpha) block."""
    return np.hstack([np.zeros((J - 1, 1)), np.eye(J - 1)])


def blue_covariance_from_partition(parts: PartitionedMse, J: int) -> np.ndarray:
    """Covariance of the estimated treatment effects, projected out of the partition."""
    S = effect_selector(J)
    return S @ parts.c11 @ S.T


def prediction_error_blocks(parts: PartitionedMse, J: int, N: int):
    """Project the partition onto the stacked individual treatment effects."""
    S = effect_selector(J)
    left = np.kron(np.ones((N, 1)), S)
    right = np.kron(np.eye(N), S)
    b1 = left @ parts.c11 @ left.T
    b2 = left @ parts.c12 @ right.T
    b3 = right @ parts.c22 @ right.T
    return b1, b2, b3


def prediction_mse_from_partition(parts: PartitionedMse, J: int, N: int) -> np.ndarray:
    b1, b2, b3 = prediction_error_blocks(parts, J, N)
    return b1 + b2 + b2.T + b3


def numeric_eigs(matrix, rel_gap: float = 1e-7) -> EigenSpectrum:
    """Spectrum of a symmetric matrix, clustered into multiplicity groups.

    Eigensolvers report no algebraic multiplicities, so eigenvalues closer
    than rel_gap in relative terms are merged into one group (represented by
    the group mean).
    """
    arr = matrix.entries if isinstance(matrix, MomentMatrix) else np.asarray(matrix, float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError("need a square matrix")
    scale = max(float(np.abs(arr).max()), 1e-300)
    if not np.allclose(arr, arr.T, rtol=0.0, atol=1e-12 * scale):
        raise ValueError("matrix is not symmetric")
    eigenvalues = np.linalg.eigvalsh(arr)[::-1]
    anchors: list[float] = []
    counts: list[int] = []
    totals: list[float] = []
    for lam in eigenvalues:
        lam = float(lam)
        if anchors and abs(anchors[-1] - lam) <= rel_gap * max(abs(anchors[-1]), abs(lam), 1e-300):
            counts[-1] += 1
            totals[-1] += lam
        else:
            anchors.append(lam)
            counts.append(1)
            totals.append(lam)
    values = np.array([total / count for total, count in zip(totals, counts)])
    return EigenSpectrum(values, np.array(counts))


@dataclass(frozen=True)
class SimulationResult:
    """Empirical prediction-error moments from one seeded Monte Carlo run."""

    second_moment: MomentMatrix
    mean_error: np.ndarray
    mean_se: np.ndarray
    reps: int
    seed: int


def _default_population_effects(J: int) -> np.ndarray:
    # documented default: intercept 1, effect j equal to j
    return np.concatenate([[1.0], np.arange(1.0, J)])


def simulate_mse(config: ModelConfig, design: ExactDesign, reps: int,
                 seed: int) -> SimulationResult:
    """Draw effects and noise, predict, and accumulate empirical error moments.

    Individual effects and noise are Gaussian with the model's first and
    second moments (only those moments matter for the MSE comparison).  The
    generator is seeded explicitly, so identical (reps, seed) pairs give
    bit-identical results.
    """
    if reps < 1:
        raise ValueError(f"need at least one replicate, got {reps}")
    if design.J != config.J or design.N != config.N:
        raise ValueError("design inconsistent with config")
    J, N, K = config.J, config.N, config.K
    u, v, s2 = config.u, config.v, config.sigma2
    rng = np.random.default_rng(seed)
    theta0 = _default_population_effects(J)

    mu = theta0[0] + np.sqrt(u * s2) * rng.standard_normal((reps, N))
    alpha = theta0[1:] + np.sqrt(v * s2) * rng.standard_normal((reps, N, J - 1))
    noise = np.sqrt(s2) * rng.standard_normal((reps, N, K))

    groups = design.group_index()
    treated = np.flatnonzero(groups < J)
    signal = mu.copy()
    signal[:, treated] += alpha[:, treated, groups[treated] - 1]
    ind_means = signal + noise.mean(axis=2)
    grp_means = group_means_from_individuals(ind_means, design)

    _, alpha_hat = predict_from_means(ind_means, grp_means, design, K, u, v)
    error = (alpha_hat - alpha).reshape(reps, N * (J - 1))
    second_moment = error.T @ error / reps
    mean_error = error.mean(axis=0)
    if reps > 1:
        mean_se = error.std(axis=0, ddof=1) / np.sqrt(reps)
    else:
        mean_se = np.full(N * (J - 1), np.nan)
    return SimulationResult(
        MomentMatrix(second_moment, moments.MSE_BLUP), mean_error, mean_se,
        reps, seed,
    )


def frobenius_distance(empirical, reference) -> float:
    """Relative Frobenius distance between two matrices."""
    emp = empirical.entries if isinstance(empirical, MomentMatrix) else np.asarray(empirical)
    ref = reference.entries if isinstance(reference, MomentMatrix) else np.asarray(reference)
    return float(np.linalg.norm(emp - ref) / np.linalg.norm(ref))


# ---------------------------------------------------------------------------
# Verification suites
# ---------------------------------------------------------------------------

GRID_GROUPS = (2, 3, 4)
GRID_SIZES = (1, 2, 3)
GRID_REPLICATES = (1, 2, 3)
GRID_VARIANCES = (0.5, 1.0, 2.0)
GRID_SIGMA2 = (1.0, 2.0)


@dataclass
class CheckResult:
    """Outcome of one verification check over a config grid."""

    name: str
    tolerance: float
    worst_error: float
    cases: int

    @property
    def passed(self) -> bool:
        return self.worst_error <= self.tolerance


def default_verification_grid() -> list[tuple[ModelConfig, ExactDesign]]:
    """Every small config the verification suites sweep (1458 in total)."""
    grid = []
    for J, n, m, K, u, v, s2 in product(
        GRID_GROUPS, GRID_SIZES, GRID_SIZES, GRID_REPLICATES,
        GRID_VARIANCES, GRID_VARIANCES, GRID_SIGMA2,
    ):
        design = ExactDesign(n=n, m=m, J=J)
        grid.append((ModelConfig(J=J, N=design.N, K=K, u=u, v=v, sigma2=s2), design))
    return grid


def _rel_error(actual, expected) -> float:
    actual = np.asarray(actual, dtype=float)
    expected = np.asarray(expected, dtype=float)
    scale = max(float(np.abs(expected).max()), 1e-300)
    return float(np.abs(actual - expected).max() / scale)


def run_oracle_checks(grid=None, datasets_per_config: int = 5,
                      seed: int = 20260801) -> list[CheckResult]:
    """Compare every closed-form result against the generic mixed-model path."""
    grid = default_verification_grid() if grid is None else list(grid)
    rng = np.random.default_rng(seed)
    worst = dict.fromkeys(
        ("solver", "cov", "mse", "two_group", "printed", "joint"), 0.0
    )
    two_group_cases = 0

    for config, design in grid:
        system = build_system(config, design)
        parts = henderson_mse(system)

        closed = partitioned_mse_closed_form(config, design)
        worst["printed"] = max(
            worst["printed"],
            _rel_error(closed.c11, parts.c11),
            _rel_error(closed.c12, parts.c12),
            _rel_error(closed.c22, parts.c22),
        )

        cov = moments.cov_blue(config, design.n, design.m).entries
        worst["cov"] = max(
            worst["cov"],
            _rel_error(blue_covariance_from_partition(parts, config.J), cov),
        )
        mse = moments.mse_blup(config, design.n, design.m).entries
        worst["mse"] = max(
            worst["mse"],
            _rel_error(prediction_mse_from_partition(parts, config.J, config.N), mse),
        )
        if config.J == 2:
            two_group_cases += 1
            assembled = moments.mse_blocks_two_group(config, design.n, design.m).assembled()
            worst["two_group"] = max(worst["two_group"], _rel_error(assembled, mse))

        for _ in range(datasets_per_config):
            y = rng.standard_normal(config.N * config.K)
            observed = system.with_observations(y)
            solution = henderson_solve(observed)
            obs = ObservationSet(design, y.reshape(config.N, config.K))
            estimate = blue(obs)
            prediction = blup(obs, config)
            beta = np.concatenate([[estimate.mu_hat], estimate.alpha_hat])
            theta_i = np.column_stack([prediction.mu_hat, prediction.alpha_hat])
            zeta = (theta_i - beta).reshape(-1)
            # compare the stacked solutions: predictions may be exactly zero
            # (n=1 groups), so entrywise scales come from the whole vector
            worst["solver"] = max(worst["solver"], _rel_error(
                np.concatenate([beta, zeta]),
                np.concatenate([solution.beta_hat, solution.gamma_hat]),
            ))
        joint = henderson_solve_joint(observed)
        worst["joint"] = max(worst["joint"], _rel_error(
            np.concatenate([joint.beta_hat, joint.gamma_hat]),
            np.concatenate([solution.beta_hat, solution.gamma_hat]),
        ))

    cases = len(grid)
    return [
        CheckResult("closed-form estimates vs mixed-model solve", SOLVER_TOL,
                    worst["solver"], cases * datasets_per_config),
        CheckResult("estimator covariance vs partition block", BLOCK_TOL,
                    worst["cov"], cases),
        CheckResult("prediction MSE vs partition blocks", BLOCK_TOL,
                    worst["mse"], cases),
        CheckResult("two-group block form vs general assembly", TWO_GROUP_TOL,
                    worst["two_group"], two_group_cases),
        CheckResult("printed partition blocks vs generic formulas", BLOCK_TOL,
                    worst["printed"], cases),
        CheckResult("joint solve vs two-step solve", SOLVER_TOL,
                    worst["joint"], cases),
    ]


def _spectrum_error(closed: EigenSpectrum, numeric: EigenSpectrum) -> float:
    expected = numeric.expand()
    actual = closed.expand()
    if actual.size != expected.size:
        return np.inf
    scale = max(float(np.abs(expected).max()), 1e-300)
    return float(np.abs(actual - expected).max() / scale)


def run_eigen_checks(grid=None) -> list[CheckResult]:
    """Compare the closed-form spectra against the numeric eigensolver."""
    grid = default_verification_grid() if grid is None else list(grid)
    worst_cov = 0.0
    worst_mse = 0.0
    two_group_cases = 0
    for config, design in grid:
        closed = moments.eig_cov_blue(config, design.n, design.m)
        numeric = numeric_eigs(moments.cov_blue(config, design.n, design.m))
        worst_cov = max(worst_cov, _spectrum_error(closed, numeric))
        if config.J == 2:
            two_group_cases += 1
            closed = moments.eig_mse_two_group(config, design.n, design.m)
            numeric = numeric_eigs(moments.mse_blup(config, design.n, design.m))
            worst_mse = max(worst_mse, _spectrum_error(closed, numeric))
    return [
        CheckResult("estimator covariance spectrum vs eigensolver", EIGEN_TOL,
                    worst_cov, len(grid)),
        CheckResult("two-group MSE spectrum vs eigensolver", EIGEN_TOL,
                    worst_mse, two_group_cases),
    ]
