"""levyheat: stochastic heat equation with multiplicative jump noise.

Exact partition-function evaluation on truncated Poisson environments,
Monte Carlo moment and Lyapunov studies, size-biased environments,
directed polymer path sampling, and intermittency / degeneracy
diagnostics.
"""

from .measures import (
    AlphaStable,
    Atom,
    DivergentIntegralError,
    EmptySupportError,
    ExponentialTail,
    LevyMeasure,
    Mixture,
    PowerTail,
    measure_from_dict,
)
from .environment import (
    Environment,
    Window,
    augment_small_jumps,
    default_box_halfwidth,
    filter_by_jump,
    read_atoms_csv,
    replica_rng,
    sample_environment,
    write_atoms_csv,
)
from .kernel import (
    dirichlet_simplex_integral,
    gamma_series,
    log_rho,
    nu,
    rho,
    rho_power_identity,
    theta,
)
from .partition import (
    ChainWeights,
    PartitionValue,
    brute_force_partition,
    field,
    forward_weights,
    free_end,
    mild_residual_free_end,
    normalized,
    point_to_point,
)
from .moments import (
    MCEstimate,
    exact_second_moment_d1,
    lyapunov_estimate,
    mc_moment,
    multiplicativity_test,
)
from .sizebias import (
    SpineRealization,
    merge_environment,
    one_body_counts,
    sample_spine,
    sizebias_identity_check,
)
from .polymer import (
    PolymerPath,
    endpoint_measure,
    localization_statistic,
    sample_path,
    sample_pinned_subset,
)
from .diagnostics import (
    ExperimentReport,
    box_convergence,
    degeneracy_scan,
    flat_initial_field,
    intermittency_report,
    mass_concentration_report,
    truncation_convergence,
)

__version__ = "0.1.0"
