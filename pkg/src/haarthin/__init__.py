"""Online Haar (1+beta)-thinning of uniform point streams on [0,1)^d."""

from .discrepancy import (
    DiscReport,
    brute_disc_oracle,
    interval_disc_1d,
    lattice_disc,
    rect_bias,
)
from .dyadic import (
    DomainError,
    DyadicInterval,
    HaarId,
    RectSpec,
    decompose_dyadic,
    decompose_lattice,
    enumerate_shapes,
    haar_eval,
    lattice_sandwich,
    locate_nonzero,
    shape_count,
)
from .strategies import (
    CandidatesExhausted,
    DecisionRecord,
    DensityValue,
    StrategyConfig,
    ThinningEngine,
    greedy_keep_prob,
    haar_keep_prob,
    monte_carlo_keep_prob,
    run,
)
from .table import CoefficientTable, new_state, recompute_oracle

__version__ = "0.1.0"

__all__ = [
    "brute_disc_oracle",
    "CandidatesExhausted",
    "CoefficientTable",
    "DecisionRecord",
    "decompose_dyadic",
    "decompose_lattice",
    "DensityValue",
    "DiscReport",
    "DomainError",
    "DyadicInterval",
    "enumerate_shapes",
    "greedy_keep_prob",
    "haar_eval",
    "haar_keep_prob",
    "HaarId",
    "interval_disc_1d",
    "lattice_disc",
    "lattice_sandwich",
    "locate_nonzero",
    "monte_carlo_keep_prob",
    "new_state",
    "recompute_oracle",
    "rect_bias",
    "RectSpec",
    "run",
    "shape_count",
    "StrategyConfig",
    "ThinningEngine",
]
