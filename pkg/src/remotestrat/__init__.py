"""Composite-index stratification design for surveys in remote areas.

Pipeline: ordinal microdata -> polychoric correlation -> first-component
category weights -> normalized village difficulty and block wealth
concentration -> cumulative root-frequency cross-strata -> Neyman
allocation -> variance/cost scenario grid.
"""

__version__ = "0.1.0"

from .allocation import (  # noqa: E402
    Allocation,
    StratumSummary,
    cost_proxy,
    neyman_allocate,
    proportional_allocate,
    stratified_variance,
    summarize_strata,
)
from .bvn import bvn_cdf  # noqa: E402
from .composite import (  # noqa: E402
    CensusBlockFrame,
    IndexVector,
    WeightTable,
    aggregate_blocks,
    compute_index,
    derive_weights,
    minmax_normalize,
    orient_difficulty,
    summarize_by_group,
)
from .polychoric import (  # noqa: E402
    PolychoricMatrix,
    ThresholdSet,
    estimate_rho,
    estimate_thresholds,
    polychoric_matrix,
    psd_repair,
)
from .scenarios import classify_quadrants, run_grid  # noqa: E402
from .schema import OrdinalDataset, Schema, VariableSpec, ingest_records, load_schema, one_hot  # noqa: E402
from .stratification import cross_stratify, cum_root_freq_boundaries  # noqa: E402
