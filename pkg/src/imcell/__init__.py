"""Intensity-matched stochastic geometry analysis of Poisson cellular networks."""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    ChannelState,
    InterfererGainDistribution,
    LinearLinkModel,
    MmWaveLinkModel,
    MultiBallLinkModel,
    MultiBallModel,
    MultiLobePattern,
    NetworkConfig,
    OMNI,
    RandomShapeLinkModel,
    TabulatedLinkModel,
    ThreeGPPLinkModel,
    antenna_gain,
    fit_multilobe,
    interferer_gain_distribution,
    state_probability,
)
from .intensity import (  # noqa: F401
    IMFitResult,
    IntensityMeasure,
    exact_intensity,
    fit_intensity_match,
    fit_link_model,
    im_intensity,
    im_intensity_derivative,
    tilde_intensity_closed_form,
)
from .load import (  # noqa: F401
    LoadProfile,
    association_probabilities,
    asymptotic_load,
    cell_area_pdf,
    load_profile,
    p_off,
    p_sel,
)
from .performance import (  # noqa: F401
    PerformanceResult,
    ase,
    coverage_probability,
    interference_exponent,
    potential_throughput,
    rate_decomposition,
)
from .simulator import SimConfig, SimEstimate, run_campaign  # noqa: F401
