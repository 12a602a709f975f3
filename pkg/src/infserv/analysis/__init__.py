from .binning import StateBinner
from .closed_form import (DiscretePMF, DivergentSeries, birth_death_stationary,
                          equilibrium_elapsed_cdf, equilibrium_elapsed_density, erlang_geometric,
                          fortet_density, fortet_marginal, poisson_pmf)
from .constants import (ProofConstants, joint_emptying_probability, joint_jump_probability,
                        proof_constants, stationary_integral_bound)
from .statistics import (MomentEstimate, TailFit, empirical_pmf, moment_estimate, tail_exponent_fit,
                         tv_bootstrap_se, tv_distance, tv_doubled)

__all__ = [
    "DiscretePMF", "DivergentSeries", "MomentEstimate", "ProofConstants", "StateBinner", "TailFit",
    "birth_death_stationary", "empirical_pmf", "joint_emptying_probability", "joint_jump_probability",
    "stationary_integral_bound", "equilibrium_elapsed_cdf",
    "equilibrium_elapsed_density", "erlang_geometric", "fortet_density", "fortet_marginal",
    "moment_estimate", "poisson_pmf", "proof_constants", "tail_exponent_fit", "tv_bootstrap_se",
    "tv_distance", "tv_doubled",
]
