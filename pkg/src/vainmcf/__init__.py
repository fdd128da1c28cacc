"""Mean curvature flow of mirror-symmetric double graphs on uniform grids."""

__version__ = "0.1.0"

from .grid import (  # noqa: E402
    ConfigurationError, GridSpec, ScalarField, SnapshotFormatError, central_gradient,
    central_hessian, make_grid, read_snapshot, save_field, write_snapshot,
)
from .vanity import (  # noqa: E402
    DomainError, DomainMask, PreconditionError, VanityCheck, compose_monotone, distance_field,
    extract_graph_form, interpolate_lambda, is_vain_function, is_vain_set, reflect, sublevel_mask,
)
from .mollifier import Kernel, make_vain_kernel, mollify, prepare_initial_data, two_point_kernel  # noqa: E402
from .solver import (  # noqa: E402
    FlowState, InstabilityError, StepControl, initial_state, mcf_rhs, run_until, step,
)
from .resolver import ResolvedSlices, ResolverConfig, build_initial, extract_boundary, resolve  # noqa: E402
from .diagnostics import (  # noqa: E402
    CutoffSpec, SingularEvent, detect_singularities, diagnose, heat_residual_phi,
    monitor_curvature_estimate, monitor_w_estimate, normal_component_w, second_fundamental_norm,
    w_evolution_residual,
)
