"""Scalar allocation criteria as functions of the treatment-group weight.

All six criteria are rational (or log-rational) functions of the weight w with
the group sizes substituted by n = N w and m = N (1 - (J-1) w).  A and E carry
squared response units, D is a natural log of a determinant; smaller is better
throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .model import ModelConfig

CRITERIA = ("A", "D", "E")
TARGETS = ("estimation", "prediction")


@dataclass(frozen=True)
class CriterionSpec:
    """Which scalar functional (A/D/E) of which moment matrix (estimation/prediction)."""

    criterion: str
    target: str

    def __post_init__(self):
        criterion = str(self.criterion).upper()
        target = str(self.target).lower()
        if criterion not in CRITERIA:
            raise ValueError(f"criterion must be one of {'/'.join(CRITERIA)}, got {self.criterion!r}")
        if target not in TARGETS:
            raise ValueError(f"target must be one of {'/'.join(TARGETS)}, got {self.target!r}")
        object.__setattr__(self, "criterion", criterion)
        object.__setattr__(self, "target", target)

    @property
    def is_estimation(self) -> bool:
        return self.target == "estimation"

    def label(self) -> str:
        return f"{self.criterion}-{self.target}"


def check_weight(w: float, J: int) -> float:
    """Validate that w lies strictly inside the feasible interval (0, 1/(J-1))."""
    upper = 1.0 / (J - 1)
    if not 0.0 < w < upper:
        raise ValueError(
            f"treatment weight must lie strictly inside (0, {upper:g}), got {w}"
        )
    return float(w)


def require_two_group_prediction(spec: CriterionSpec, J: int):
    if spec.target == "prediction" and spec.criterion in ("D", "E") and J != 2:
        raise ValueError(
            f"the {spec.criterion}-criterion for prediction is only available "
            f"for J=2, got J={J}"
        )


def criterion_value(config: ModelConfig, spec: CriterionSpec, w: float) -> float:
    """Evaluate the chosen criterion at treatment weight w."""
    require_two_group_prediction(spec, config.J)
    w = check_weight(w, config.J)
    J, K, N = config.J, config.K, config.N
    u, v, s2 = config.u, config.v, config.sigma2
    ku1 = K * u + 1.0
    kuv1 = K * (v + u) + 1.0
    ctrl = 1.0 - (J - 1) * w

    if spec.target == "estimation":
        if spec.criterion == "A":
            return s2 * (J - 1) / (K * N) * (kuv1 / w + ku1 / ctrl)
        if spec.criterion == "D":
            value = (J - 1) * math.log(s2 / (K * N))
            value += math.log(kuv1 / w + (J - 1) * ku1 / ctrl)
            if J > 2:
                value += (J - 2) * math.log(kuv1 / w)
            return value
        return s2 / (K * N) * (kuv1 / w + (J - 1) * ku1 / ctrl)

    if spec.criterion == "A":
        tail = v * (N - 2.0 - K * v * (N * w - 1.0) / kuv1)
        return s2 * (J - 1) * (kuv1 / (K * w) + ku1 / (K * ctrl) + tail)
    if spec.criterion == "D":
        shift = math.log(ku1 / kuv1)
        base = N * math.log(s2) + (N - 1) * math.log(v) + math.log(kuv1) - math.log(K)
        return base + N * w * shift - math.log(w * (1.0 - w))
    disc = (K * (1.0 - w) * v) ** 2 \
        + 2.0 * K * (1.0 - w) * (1.0 - 2.0 * w) * ku1 * v + ku1 ** 2
    return s2 / 2.0 * (v / w + (ku1 + math.sqrt(disc)) / (K * w * (1.0 - w)))


def fixed_effects_criterion_weight(spec: CriterionSpec, J: int) -> float:
    """Optimal weight of the same criterion in the fixed-effects reference model.

    These are the starting values every variance sweep approaches as the
    effect variance vanishes.  The A reference exists for any J; the D and E
    prediction references are only defined in the two-group case, where all
    three coincide at 1/2.
    """
    if J < 2:
        raise ValueError(f"need at least two groups, got J={J}")
    if spec.criterion == "A":
        return 1.0 / (J - 1 + math.sqrt(J - 1.0))
    if spec.target == "prediction" and J != 2:
        raise ValueError(
            f"no fixed-model reference weight for {spec.label()} with J={J}"
        )
    if spec.criterion == "D":
        return 1.0 / J
    return 1.0 / (2.0 * (J - 1))
