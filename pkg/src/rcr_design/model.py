"""Model constants, allocation designs, and observation-model matrices.

The data layout is a balanced multi-group study: J - 1 treatment groups with n
individuals each, one control group with m individuals, and K repeated
observations per individual.  Individuals are numbered globally 1..N in group
order, treatment groups first and the control group last.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

CONFIG_KEYS = ("J", "N", "K", "u", "v", "sigma2")


@dataclass(frozen=True)
class ModelConfig:
    """Population-level constants of the study.

    u and v are dimensionless variance ratios: individual intercepts vary
    around the population intercept with variance u * sigma2 and individual
    treatment effects vary around the population effects with variance
    v * sigma2.  Observation noise has variance sigma2.
    """

    J: int
    N: int
    K: int
    u: float
    v: float
    sigma2: float = 1.0

    def __post_init__(self):
        if self.J < 2:
            raise ValueError(f"need at least two groups, got J={self.J}")
        if self.N < self.J:
            raise ValueError(f"need N >= J individuals, got N={self.N} with J={self.J}")
        if self.K < 1:
            raise ValueError(f"need K >= 1 observations per individual, got K={self.K}")
        if self.u <= 0 or self.v <= 0:
            raise ValueError("variance ratios u and v must be positive")
        if self.sigma2 <= 0:
            raise ValueError("error variance sigma2 must be positive")

    @property
    def b(self) -> float:
        """Variance ratio v / u."""
        return self.v / self.u

    @property
    def rho(self) -> float:
        """Treatment-effect variance mapped onto (0, 1): v / (1 + v)."""
        return self.v / (1.0 + self.v)


def config_from_rho(J: int, N: int, K: int, rho: float, b: float,
                    sigma2: float = 1.0) -> ModelConfig:
    """Build a config from the bounded variance parameter rho = v/(1+v) and b = v/u."""
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie strictly inside (0, 1), got {rho}")
    if b <= 0:
        raise ValueError("variance ratio b must be positive")
    v = rho / (1.0 - rho)
    return ModelConfig(J=J, N=N, K=K, u=v / b, v=v, sigma2=sigma2)


def config_from_json(doc) -> ModelConfig:
    """Parse a config document with keys {"J","N","K","u","v","sigma2"}.

    sigma2 defaults to 1 when omitted; unknown keys are rejected.
    """
    data = json.loads(doc) if isinstance(doc, (str, bytes)) else dict(doc)
    if not isinstance(data, dict):
        raise ValueError("config document must be a JSON object")
    unknown = sorted(set(data) - set(CONFIG_KEYS))
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    missing = sorted({"J", "N", "K", "u", "v"} - set(data))
    if missing:
        raise ValueError(f"missing config keys: {', '.join(missing)}")
    return ModelConfig(
        J=int(data["J"]), N=int(data["N"]), K=int(data["K"]),
        u=float(data["u"]), v=float(data["v"]),
        sigma2=float(data.get("sigma2", 1.0)),
    )


@dataclass(frozen=True)
class ExactDesign:
    """Integer allocation: n individuals per treatment group, m in the control group."""

    n: int
    m: int
    J: int

    def __post_init__(self):
        if self.J < 2:
            raise ValueError(f"need at least two groups, got J={self.J}")
        if self.n < 1 or self.m < 1:
            raise ValueError(
                f"every group needs at least one individual, got n={self.n}, m={self.m}"
            )

    @property
    def N(self) -> int:
        return (self.J - 1) * self.n + self.m

    def group_sizes(self) -> np.ndarray:
        """Group sizes r_1..r_J, treatment groups first."""
        sizes = np.full(self.J, self.n, dtype=int)
        sizes[-1] = self.m
        return sizes

    def cumulative_counts(self) -> np.ndarray:
        """Running individual counts (0, n, 2n, ..., (J-1)n, N)."""
        return np.concatenate([[0], np.cumsum(self.group_sizes())])

    def group_index(self) -> np.ndarray:
        """Owning group (1-based) of each individual, length N."""
        return np.repeat(np.arange(1, self.J + 1), self.group_sizes())


@dataclass(frozen=True)
class ApproximateDesign:
    """Continuous allocation: weight w per treatment group."""

    w: float
    J: int

    def __post_init__(self):
        if self.J < 2:
            raise ValueError(f"need at least two groups, got J={self.J}")
        upper = 1.0 / (self.J - 1)
        if not 0.0 < self.w < upper:
            raise ValueError(
                f"treatment weight must lie strictly inside (0, {upper:g}), got {self.w}"
            )

    @property
    def control_weight(self) -> float:
        return 1.0 - (self.J - 1) * self.w


def weight_of(design: ExactDesign, N: int | None = None) -> ApproximateDesign:
    """Treatment-group weight w = n / N of an exact design."""
    total = design.N if N is None else N
    return ApproximateDesign(w=design.n / total, J=design.J)


def regression_vector(j: int, J: int) -> np.ndarray:
    """Regressor attached to group j: an intercept plus the group's effect indicator.

    Treatment groups j < J carry (1, e_j); the control group j = J carries
    (1, 0, ..., 0).
    """
    if not 1 <= j <= J:
        raise ValueError(f"group index {j} out of range 1..{J}")
    f = np.zeros(J)
    f[0] = 1.0
    if j < J:
        f[j] = 1.0
    return f


@dataclass(frozen=True)
class MixedModelSystem:
    """Dense matrices of the equivalent linear mixed model Y = X b + Z g + e."""

    X: np.ndarray  # (N K, J) fixed-effects design
    Z: np.ndarray  # (N K, N J) random-effects design, block diagonal by group
    G: np.ndarray  # (N J, N J) random-effects covariance
    R: np.ndarray  # (N K, N K) error covariance
    Y: np.ndarray | None = None

    def __post_init__(self):
        for name in ("X", "Z", "G", "R", "Y"):
            value = getattr(self, name)
            if value is None:
                continue
            arr = np.array(value, dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        rows = self.X.shape[0]
        if self.Z.shape[0] != rows or self.R.shape != (rows, rows):
            raise ValueError("X, Z and R row dimensions disagree")
        q = self.Z.shape[1]
        if self.G.shape != (q, q):
            raise ValueError("G must be square with the column dimension of Z")
        if self.Y is not None and self.Y.shape != (rows,):
            raise ValueError(f"observation vector must have length {rows}")

    def with_observations(self, y) -> "MixedModelSystem":
        return MixedModelSystem(self.X, self.Z, self.G, self.R, y)


def build_system(config: ModelConfig, design: ExactDesign, y=None) -> MixedModelSystem:
    """Assemble the dense mixed-model matrices for a config/design pair.

    Row order follows the global individual numbering with each individual's
    K replicates contiguous; random-effect columns hold one (intercept,
    effects) block of length J per individual.
    """
    if design.J != config.J or design.N != config.N:
        raise ValueError(
            f"design (J={design.J}, N={design.N}) inconsistent with "
            f"config (J={config.J}, N={config.N})"
        )
    J, N, K = config.J, config.N, config.K
    x_blocks = []
    z_blocks = []
    for j in range(1, J + 1):
        per_individual = np.outer(np.ones(K), regression_vector(j, J))
        r = design.n if j < J else design.m
        x_blocks.append(np.tile(per_individual, (r, 1)))
        z_blocks.append(np.kron(np.eye(r), per_individual))
    X = np.vstack(x_blocks)
    Z = block_diag(*z_blocks)
    G = config.sigma2 * np.kron(
        np.eye(N), np.diag([config.u] + [config.v] * (J - 1))
    )
    R = config.sigma2 * np.eye(N * K)
    return MixedModelSystem(X, Z, G, R, y)
