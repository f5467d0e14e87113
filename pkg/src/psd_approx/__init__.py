"""Total variation bounds for Poisson and negative binomial approximation of PSD convolutions."""

from .families import (
    BERNOULLI,
    FAMILIES,
    GEOMETRIC,
    LOGARITHMIC,
    POISSON,
    ConvergenceError,
    DegenerateFamilyError,
    DomainError,
    PowerSeriesFamily,
    PsdError,
    PsdInstance,
    TruncatedPmf,
    TruncationError,
    eval_h,
    get_family,
    moments,
    pmf,
    star_pmf,
    truncate,
    weighted_l1_gap,
)
from .negbin import (
    InfeasibleParamsError,
    NbParams,
    TauEstimate,
    fit_params,
    nb_bound_one,
    nb_bound_two,
    nb_closed_forms,
    nb_pmf,
    tau_geometric,
    tau_upper,
)
from .oracle import ValidationReport, certify, convolve, reference_pmf, tv_distance
from .poisson import (
    BoundEntry,
    BoundReport,
    ConvolutionSpec,
    UnsupportedClosedFormError,
    convergence_probe,
    poisson_bound_crude,
    poisson_bound_general,
    poisson_closed_forms,
)
from .scenario import ResultTable, Scenario, emit, parse_scenario, run_scenario

__version__ = "0.1.0"
