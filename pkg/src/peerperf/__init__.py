"""Peer-performance ratios for carbon-intensity peer groups."""

__version__ = "0.1.0"

from .data_ingest import (  # noqa: E402
    EmissionsRecord,
    EmissionsTable,
    FactorPanel,
    GroupAssignment,
    ReturnPanel,
    form_peer_groups,
    ghg_intensity,
    latest_intensity,
    load_emissions,
    load_factor_panel,
    load_return_panel,
)
from .econometrics import hac_lrv, ols_fit, pairwise_alpha_test, pvalue_from_t  # noqa: E402
from .peer_ratios import (  # noqa: E402
    AggregateRatios,
    PairEvidence,
    RatioTriple,
    aggregate_ratios,
    split_ratios,
    stock_ratio_triple,
    storey_pi0,
)
from .trend import (  # noqa: E402
    RatioSeries,
    TrendResult,
    beta_regression,
    block_bootstrap_se,
    hansen_hodrick_se,
    linear_trend,
    stationary_bootstrap_se,
    summarize_series,
)
