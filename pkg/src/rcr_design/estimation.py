"""Group means, population-effect estimates, and individual-effect predictions.

Observations come in a complete balanced layout: exactly K replicates for each
of N individuals, individuals numbered 1..N in group order.  Both estimators
are linear in group and individual means, so everything here reduces to
averaging followed by fixed shrinkage weights.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .model import ExactDesign, ModelConfig

OBSERVATION_HEADER = ("group", "individual", "replicate", "value")


@dataclass(frozen=True)
class ObservationSet:
    """Complete replicate-by-individual observation table.

    Row i-1 of ``values`` holds the K replicates of individual i; group
    membership follows the design's block layout.
    """

    design: ExactDesign
    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=float)
        if arr.ndim != 2:
            raise ValueError("values must be a (N, K) array")
        if arr.shape[0] != self.design.N:
            raise ValueError(
                f"expected {self.design.N} individuals, got {arr.shape[0]} rows"
            )
        if arr.shape[1] < 1:
            raise ValueError("need at least one replicate per individual")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def K(self) -> int:
        return self.values.shape[1]

    def individual_means(self) -> np.ndarray:
        """Mean over the K replicates of each individual, length N."""
        return self.values.mean(axis=1)

    def group_means(self) -> np.ndarray:
        """Mean of the individual means within each group, length J."""
        return group_means_from_individuals(self.individual_means(), self.design)


def group_means_from_individuals(ind_means, design: ExactDesign) -> np.ndarray:
    """Per-group means of per-individual means; broadcasts over leading axes."""
    ind_means = np.asarray(ind_means, dtype=float)
    bounds = design.cumulative_counts()
    return np.stack(
        [ind_means[..., bounds[j]:bounds[j + 1]].mean(axis=-1) for j in range(design.J)],
        axis=-1,
    )


def group_means(obs: ObservationSet) -> tuple[np.ndarray, np.ndarray]:
    """Per-group and per-individual observation means."""
    ind = obs.individual_means()
    return group_means_from_individuals(ind, obs.design), ind


@dataclass(frozen=True)
class PopulationEstimate:
    """Estimated population intercept and mean treatment effects."""

    mu_hat: float
    alpha_hat: np.ndarray

    def __post_init__(self):
        arr = np.array(self.alpha_hat, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "alpha_hat", arr)
        object.__setattr__(self, "mu_hat", float(self.mu_hat))


@dataclass(frozen=True)
class IndividualPrediction:
    """Predicted individual intercepts and treatment effects.

    ``alpha_hat[i-1, j-1]`` predicts the effect of treatment j on individual
    i, whether or not the individual actually received it.
    """

    mu_hat: np.ndarray
    alpha_hat: np.ndarray

    def __post_init__(self):
        mu = np.array(self.mu_hat, dtype=float)
        alpha = np.array(self.alpha_hat, dtype=float)
        if alpha.shape[:1] != mu.shape:
            raise ValueError("intercept and effect predictions disagree on N")
        mu.setflags(write=False)
        alpha.setflags(write=False)
        object.__setattr__(self, "mu_hat", mu)
        object.__setattr__(self, "alpha_hat", alpha)


def blue(obs: ObservationSet) -> PopulationEstimate:
    """Estimate the population intercept and mean treatment effects.

    The control-group mean estimates the intercept; group-minus-control mean
    differences estimate the treatment effects.  No variance parameters enter.
    """
    grp = obs.group_means()
    return PopulationEstimate(float(grp[-1]), grp[:-1] - grp[-1])


def blup(obs: ObservationSet, config: ModelConfig) -> IndividualPrediction:
    """Predict every individual's intercept and treatment effects.

    Individual deviations are shrunk toward the group and control means with
    weights that depend only on K, u and v.
    """
    _check_config(obs, config)
    mu, alpha = predict_from_means(
        obs.individual_means(), obs.group_means(), obs.design,
        config.K, config.u, config.v,
    )
    return IndividualPrediction(mu, alpha)


def _check_config(obs: ObservationSet, config: ModelConfig):
    design = obs.design
    if (config.J, config.N, config.K) != (design.J, design.N, obs.K):
        raise ValueError(
            f"config (J={config.J}, N={config.N}, K={config.K}) does not match "
            f"observations (J={design.J}, N={design.N}, K={obs.K})"
        )


def predict_from_means(ind_means, grp_means, design: ExactDesign, K, u, v):
    """Shrinkage predictions from individual and group means.

    Accepts leading batch axes on both mean arrays, which lets simulation
    studies evaluate many replicates in one call.

    Args:
        ind_means: (..., N) per-individual means.
        grp_means: (..., J) per-group means.
        design: allocation fixing the group blocks.
        K, u, v: replicate count and variance ratios.

    Returns:
        (mu, alpha): (..., N) intercept predictions and (..., N, J-1)
        treatment-effect predictions.
    """
    ind_means = np.asarray(ind_means, dtype=float)
    grp_means = np.asarray(grp_means, dtype=float)
    J = design.J
    groups = design.group_index()
    treated = np.flatnonzero(groups < J)
    own = groups[treated] - 1  # 0-based effect index of each treated individual

    ku = K * u
    pool = ku + 1.0                  # control-group shrinkage denominator
    spread = K * (v + u) + 1.0       # within-treatment-group denominator

    ctrl = grp_means[..., -1:]
    own_mean = grp_means[..., groups - 1]
    mu = np.where(
        groups == J,
        (ku * ind_means + ctrl) / pool,
        ku / spread * (ind_means - own_mean) + ctrl,
    )

    # every individual inherits the population estimate for foreign treatments
    effects = grp_means[..., :-1] - ctrl
    alpha = np.broadcast_to(effects[..., None, :], mu.shape + (J - 1,)).copy()
    alpha[..., treated, own] = (
        K * v / spread * (ind_means[..., treated] - ctrl)
        + pool / spread * (grp_means[..., own] - ctrl)
    )
    return mu, alpha


def parse_observations(rows) -> ObservationSet:
    """Build an ObservationSet from long-form rows (header row first).

    Expects columns group, individual, replicate, value with 1-based indices,
    a complete K-replicate layout, equal treatment-group sizes, and the global
    block numbering of individuals.
    """
    rows = iter(rows)
    try:
        header = [c.strip().lower() for c in next(rows)]
    except StopIteration:
        raise ValueError("observation table is empty") from None
    if tuple(header) != OBSERVATION_HEADER:
        raise ValueError(
            f"expected header {','.join(OBSERVATION_HEADER)}, got {','.join(header)}"
        )

    cells: dict[tuple[int, int], float] = {}
    owner: dict[int, int] = {}
    for lineno, row in enumerate(rows, start=2):
        if not row or all(not str(c).strip() for c in row):
            continue
        if len(row) != 4:
            raise ValueError(f"line {lineno}: expected 4 columns, got {len(row)}")
        try:
            group, individual, replicate = (int(row[0]), int(row[1]), int(row[2]))
            value = float(row[3])
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
        if group < 1 or individual < 1 or replicate < 1:
            raise ValueError(f"line {lineno}: indices must be 1-based positive integers")
        if owner.setdefault(individual, group) != group:
            raise ValueError(f"individual {individual} appears in more than one group")
        key = (individual, replicate)
        if key in cells:
            raise ValueError(f"duplicate observation for individual {individual}, "
                             f"replicate {replicate}")
        cells[key] = value

    if not owner:
        raise ValueError("observation table has no data rows")
    J = max(owner.values())
    if J < 2:
        raise ValueError("need at least one treatment group and the control group")
    N = max(owner)
    if sorted(owner) != list(range(1, N + 1)):
        raise ValueError("individuals must be numbered 1..N without gaps")

    sizes = [sum(1 for g in owner.values() if g == j) for j in range(1, J + 1)]
    if min(sizes) == 0:
        raise ValueError("every group between 1 and J needs at least one individual")
    if len(set(sizes[:-1])) != 1:
        raise ValueError(f"treatment groups must share one size, got {sizes[:-1]}")
    design = ExactDesign(n=sizes[0], m=sizes[-1], J=J)

    expected = design.group_index()
    for individual, group in owner.items():
        if group != expected[individual - 1]:
            raise ValueError(
                f"individual {individual} belongs to group {expected[individual - 1]} "
                f"under the block numbering, got group {group}"
            )

    replicates = sorted(r for (i, r) in cells if i == 1)
    K = len(replicates)
    if replicates != list(range(1, K + 1)):
        raise ValueError("replicates must be numbered 1..K without gaps")
    values = np.empty((N, K))
    for i in range(1, N + 1):
        for k in range(1, K + 1):
            try:
                values[i - 1, k - 1] = cells.pop((i, k))
            except KeyError:
                raise ValueError(
                    f"missing replicate {k} for individual {i}"
                ) from None
    if cells:
        individual, replicate = next(iter(cells))
        raise ValueError(
            f"individual {individual} has more than K={K} replicates "
            f"(found replicate {replicate})"
        )
    return ObservationSet(design, values)


def read_observations_csv(path) -> ObservationSet:
    """Load a long-form observation table from a CSV file."""
    with open(path, newline="") as fh:
        return parse_observations(csv.reader(fh))


def write_predictions_csv(prediction: IndividualPrediction, design: ExactDesign, fh):
    """Write one prediction row per individual: individual,group,mu_hat,alpha_1,..."""
    J = design.J
    header = ["individual", "group", "mu_hat"] + [f"alpha_{j}" for j in range(1, J)]
    fh.write(",".join(header) + "\n")
    groups = design.group_index()
    for i in range(design.N):
        fields = [str(i + 1), str(groups[i]), f"{prediction.mu_hat[i]:.10g}"]
        fields += [f"{a:.10g}" for a in prediction.alpha_hat[i]]
        fh.write(",".join(fields) + "\n")
