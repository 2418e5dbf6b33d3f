"""Second-moment matrices of the estimator and predictor with closed-form spectra.

Two independent implementations cover the predictor MSE: the general block
assembly valid for any number of groups, and the two-group partition written
directly in terms of the treatment/control split.  Tests hold them against
each other and against the generic mixed-model oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

from .model import ModelConfig

COV_BLUE = "cov_blue"
MSE_BLUP = "mse_blup"


@dataclass(frozen=True)
class MomentMatrix:
    """Dense symmetric second-moment matrix, in squared response units."""

    entries: np.ndarray
    kind: str

    def __post_init__(self):
        arr = np.array(self.entries, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError("moment matrix must be square")
        if self.kind not in (COV_BLUE, MSE_BLUP):
            raise ValueError(f"unknown moment-matrix kind {self.kind!r}")
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class EigenSpectrum:
    """Eigenvalues with algebraic multiplicities, sorted descending."""

    values: np.ndarray
    multiplicities: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        mults = np.array(self.multiplicities, dtype=int)
        if vals.ndim != 1 or vals.shape != mults.shape:
            raise ValueError("values and multiplicities must be matching 1-d arrays")
        if vals.size == 0:
            raise ValueError("spectrum needs at least one eigenvalue")
        if np.any(mults < 1):
            raise ValueError("multiplicities must be positive")
        if np.any(np.diff(vals) > 0):
            raise ValueError("eigenvalues must be sorted descending")
        vals.setflags(write=False)
        mults.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "multiplicities", mults)

    @property
    def dim(self) -> int:
        return int(self.multiplicities.sum())

    def expand(self) -> np.ndarray:
        """Full eigenvalue vector with repetitions, descending."""
        return np.repeat(self.values, self.multiplicities)


def spectrum_from_pairs(pairs) -> EigenSpectrum:
    """Build a spectrum from (value, multiplicity) pairs, dropping zero multiplicities."""
    kept = sorted(((float(v), int(m)) for v, m in pairs if m > 0), key=lambda p: -p[0])
    if not kept:
        raise ValueError("spectrum needs at least one eigenvalue with positive multiplicity")
    values: list[float] = []
    mults: list[int] = []
    for value, mult in kept:
        if values and value == values[-1]:
            mults[-1] += mult
        else:
            values.append(value)
            mults.append(mult)
    return EigenSpectrum(np.array(values), np.array(mults))


def _check_sizes(config: ModelConfig, n, m, integer=False):
    if n <= 0 or m <= 0:
        raise ValueError(f"group sizes must be positive, got n={n}, m={m}")
    if integer and not (float(n).is_integer() and float(m).is_integer()):
        raise ValueError(f"integer group sizes required, got n={n}, m={m}")
    total = (config.J - 1) * n + m
    if abs(total - config.N) > 1e-9 * config.N:
        raise ValueError(f"group sizes sum to {total}, expected N={config.N}")


def cov_blue(config: ModelConfig, n, m) -> MomentMatrix:
    """Covariance matrix of the estimated population treatment effects.

    A shared control-group term on every entry plus a within-group term on the
    diagonal.  n and m may be fractional: the entries are rational in the
    group sizes, which supports evaluating the matrix at a continuous
    allocation.
    """
    _check_sizes(config, n, m)
    J, K = config.J, config.K
    shared = (K * config.u + 1.0) / (K * m)
    own = (K * (config.v + config.u) + 1.0) / (K * n)
    entries = config.sigma2 * (shared * np.ones((J - 1, J - 1)) + own * np.eye(J - 1))
    return MomentMatrix(entries, COV_BLUE)


def mse_blocks(config: ModelConfig, n, m) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Structural blocks whose sum B1 + B2 + B2' + B3 is the predictor MSE.

    B1 repeats the population-estimate covariance across all individual pairs,
    B2 couples the population estimate with each treated individual's own
    group, and B3 carries the per-individual prediction error.
    """
    _check_sizes(config, n, m, integer=True)
    n, m = int(n), int(m)
    J, K, N = config.J, config.K, config.N
    u, v, s2 = config.u, config.v, config.sigma2
    p = J - 1

    shared = (K * u + 1.0) / (K * m)
    own = (K * (v + u) + 1.0) / (K * n)
    b1 = s2 * np.kron(np.ones((N, N)), shared * np.ones((p, p)) + own * np.eye(p))

    unit = np.eye(p)
    row = np.hstack(
        [np.kron(np.ones((1, n)) / n, np.outer(unit[j], unit[j])) for j in range(p)]
        + [np.zeros((p, m * p))]
    )
    b2 = -s2 * v * np.kron(np.ones((N, 1)), row)

    shrink = K * v / (K * (v + u) + 1.0)
    center = np.eye(n) - np.ones((n, n)) / n
    treated = block_diag(
        *[np.kron(center, np.outer(unit[j], unit[j])) for j in range(p)]
    )
    b3 = s2 * v * block_diag(np.eye(n * p * p) - shrink * treated, np.eye(m * p))
    return b1, b2, b3


def mse_blup(config: ModelConfig, n, m) -> MomentMatrix:
    """Mean squared error matrix of the predicted individual treatment effects."""
    b1, b2, b3 = mse_blocks(config, n, m)
    return MomentMatrix(b1 + b2 + b2.T + b3, MSE_BLUP)


@dataclass(frozen=True)
class TwoGroupMseBlocks:
    """Treatment/control partition of the two-group predictor MSE."""

    h11: np.ndarray
    h12: np.ndarray
    h22: np.ndarray

    def __post_init__(self):
        for name in ("h11", "h12", "h22"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def assembled(self) -> np.ndarray:
        return np.block([[self.h11, self.h12], [self.h12.T, self.h22]])


def mse_blocks_two_group(config: ModelConfig, n, m) -> TwoGroupMseBlocks:
    """Two-group predictor MSE written directly over the treatment/control split."""
    if config.J != 2:
        raise ValueError(f"two-group block form needs J=2, got J={config.J}")
    _check_sizes(config, n, m, integer=True)
    n, m = int(n), int(m)
    K, u, v, s2 = config.K, config.u, config.v, config.sigma2
    N = n + m
    ku1 = K * u + 1.0
    kuv1 = K * (u + v) + 1.0
    h11 = s2 * ku1 * (
        N / (K * n * m) * np.ones((n, n))
        + v / kuv1 * (np.eye(n) - np.ones((n, n)) / n)
    )
    h12 = s2 * ku1 * N / (K * n * m) * np.ones((n, m))
    h22 = s2 * (
        (kuv1 / (K * n) + ku1 / (K * m)) * np.ones((m, m)) + v * np.eye(m)
    )
    return TwoGroupMseBlocks(h11, h12, h22)


def eig_cov_blue(config: ModelConfig, n, m) -> EigenSpectrum:
    """Closed-form spectrum of the estimator covariance.

    One simple eigenvalue along the shared all-ones direction and a
    (J-2)-fold eigenvalue on the contrast space.
    """
    _check_sizes(config, n, m)
    J, K, s2 = config.J, config.K, config.sigma2
    kuv1 = K * (config.v + config.u) + 1.0
    lam1 = s2 / K * ((K * config.u + 1.0) * (J - 1) / m + kuv1 / n)
    lam2 = s2 * kuv1 / (K * n)
    return spectrum_from_pairs([(lam1, 1), (lam2, J - 2)])


def eig_mse_two_group(config: ModelConfig, n, m) -> EigenSpectrum:
    """Closed-form spectrum of the two-group predictor MSE.

    Within-treatment and within-control contrast eigenvalues with
    multiplicities n - 1 and m - 1, plus two simple eigenvalues from the
    coupled group-mean directions.
    """
    if config.J != 2:
        raise ValueError(f"two-group spectrum needs J=2, got J={config.J}")
    _check_sizes(config, n, m, integer=True)
    n, m = int(n), int(m)
    K, u, v, s2 = config.K, config.u, config.v, config.sigma2
    N = n + m
    ku1 = K * u + 1.0
    kuv1 = K * (v + u) + 1.0
    lam1 = s2 * v * ku1 / kuv1
    lam2 = s2 * v
    disc = (K * m * v) ** 2 + 2.0 * K * m * (m - n) * ku1 * v + (N * ku1) ** 2
    scale = s2 * N / (2.0 * K * n * m)
    lam3 = scale * (K * m * v + N * ku1 + np.sqrt(disc))
    lam4 = scale * (K * m * v + N * ku1 - np.sqrt(disc))
    return spectrum_from_pairs([(lam1, n - 1), (lam2, m - 1), (lam3, 1), (lam4, 1)])
