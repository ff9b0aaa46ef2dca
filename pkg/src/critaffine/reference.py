"""Reference models used by the acceptance suite and the CLI defaults.

Centring shifts of the non-exact families were computed once with large
Monte Carlo budgets and are frozen here; the acceptance suite re-checks
that the Lyapunov exponent of each centred model is close to zero.
"""

from __future__ import annotations

import math

import numpy as np

from .models import ModelSpec

# small B keeps the bulk of |X| well below the return radius, so return
# frequencies at 10^6 steps are far from the decision thresholds
REFERENCE_SIGMA_B = 1e-6
RETURN_RADIUS = 20.0

ROTATION_ANGLE = 0.424
ROTATION_WEIGHT = 0.02

# shift = -E ln|<w~, w>| for the concentrated rank-one model (10^8 draws,
# stderr 1.2e-6)
RANK_ONE_SHIFT = 0.0102082
# shifts = -(unshifted exponent), 10^8 steps each, stderr 1.1e-5 and 5e-6
PROXIMAL_SHIFT = -0.6772927
NONNEGATIVE_SHIFT = -0.6968863


def similarity(sigma_a: float = 0.1, d: int = 2, sigma_b: float = REFERENCE_SIGMA_B) -> ModelSpec:
    """Haar rotation times a centred lognormal scale."""
    return ModelSpec("Similarity", d=d, sigma_a=sigma_a, sigma_b=sigma_b)


def rank_one(sigma_b: float = REFERENCE_SIGMA_B) -> ModelSpec:
    """``a w w~^T`` with both directions concentrated around ``e_1``."""
    return ModelSpec("RankOne", d=2, sigma_a=0.1, w_center=(1.0, 0.0), w_tilde_center=(1.0, 0.0),
                     direction_spread=0.1, log_scale_shift=RANK_ONE_SHIFT, sigma_b=sigma_b)


def rank_one_uniform(sigma_a: float = 1.0, sigma_b: float = REFERENCE_SIGMA_B) -> ModelSpec:
    """Uniform directions in the plane; ``E ln|cos theta| = -ln 2`` makes the
    centring shift exactly ``ln 2``."""
    return ModelSpec("RankOne", d=2, sigma_a=sigma_a, log_scale_shift=math.log(2.0), sigma_b=sigma_b)


def rotation_matrix(angle: float) -> tuple:
    c, s = math.cos(angle), math.sin(angle)
    return ((c, -s), (s, c))


def invertible_proximal(shift: float = PROXIMAL_SHIFT, sigma_b: float = REFERENCE_SIGMA_B) -> ModelSpec:
    """``diag(2, 1/2)`` mixed with a rare fixed irrational rotation.

    The hyperbolic element makes the semigroup proximal and the rotation,
    whose angle is not a rational multiple of pi, leaves no finite union of
    lines invariant.
    """
    return ModelSpec("InvertibleProximal", d=2,
                     matrices=(((2.0, 0.0), (0.0, 0.5)), rotation_matrix(ROTATION_ANGLE)),
                     weights=(1.0 - ROTATION_WEIGHT, ROTATION_WEIGHT),
                     log_scale_shift=shift, sigma_b=sigma_b)


def nonnegative(shift: float = NONNEGATIVE_SHIFT, sigma_b: float = REFERENCE_SIGMA_B) -> ModelSpec:
    """Entries ``exp(0.1 N(0, 1))``: every matrix is strictly positive."""
    return ModelSpec("Nonnegative", d=2, entry_log_sigma=0.1, log_scale_shift=shift, sigma_b=sigma_b)


def diagonal_counterexample(sigma_b: float = REFERENCE_SIGMA_B) -> ModelSpec:
    return ModelSpec("DiagonalCounterexample", diag_sigma=1.0, sigma_b=sigma_b)


def permutation_counterexample(sigma_b: float = REFERENCE_SIGMA_B) -> ModelSpec:
    return ModelSpec("PermutationCounterexample", perm_lambda=2.0, sigma_b=sigma_b)


def rotation_only(d: int = 2) -> ModelSpec:
    """Haar rotations with no scaling."""
    return ModelSpec("Similarity", d=d, sigma_a=0.0)


def recurrent_models() -> dict[str, ModelSpec]:
    return {"Similarity": similarity(), "RankOne": rank_one(),
            "InvertibleProximal": invertible_proximal(), "Nonnegative": nonnegative()}


def transient_models() -> dict[str, ModelSpec]:
    return {"DiagonalCounterexample": diagonal_counterexample(),
            "PermutationCounterexample": permutation_counterexample()}


def start_point(spec: ModelSpec) -> np.ndarray:
    return np.zeros(spec.d)
