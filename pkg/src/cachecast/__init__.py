"""Cache size allocation and multicast beamforming for wireless backhaul.

A library plus experiment CLI that decides how much cache to place at each
base station of a cloud radio access network whose backhaul is a wireless
multicast channel, and how to beamform toward the base stations during file
delivery.  Cache sizes are optimized offline against sampled channel
statistics (successive linearization with a trust region, solved by a
consensus ADMM sweep over the samples); beamformers are re-optimized per
channel realization.
"""

from .channel import (
    BsGeometry,
    ChannelSet,
    build_correlation,
    default_geometry,
    load_channels,
    path_loss_db,
    resolve_angles,
    sample_channels,
    save_channels,
)
from .errors import (
    ConfigError,
    InfeasibleError,
    NotPsdError,
    NumericalError,
    ValidationError,
)
from .kernel import (
    SolveReport,
    extract_rank_one,
    solve_admm_subproblem,
    solve_beamforming_fixed_cache,
    solve_dynamic_bound,
)
from .linalg import hermitian_eig, matrix_sqrt, trace_inner
from .rates import (
    CacheAllocation,
    PopularityProfile,
    RateReport,
    SystemConfig,
    default_config,
    joint_rate,
    joint_time,
    mutual_info,
    rate_report,
    separate_rate,
    separate_time,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
