"""patchwave: 2D staggered-patch multiscale schemes for weakly damped waves.

The package builds staggered patch grids over a periodic square domain,
couples the patches by global spectral or local polynomial (square-p)
interpolation, and analyses the resulting linear dynamical systems:
eigenvalue spectra and their macro/micro classification, accuracy and
stability sweeps, consistency power laws, roundoff sensitivity, explicit
time simulation, and compute-cost benchmarks against the r^2 cost model.
"""

__version__ = "0.1.0"

from .errors import (
    ContractError,
    GeometryError,
    NumericalConsistencyError,
    NumericalError,
    ParameterError,
    PatchwaveError,
    SimulationError,
)
from .grid import (
    MicroGridSpec,
    NodeIndex,
    PatchGridSpec,
    build_micro_grid,
    build_patch_grid,
    edge_node_set,
)
from .microscale import (
    EigTriple,
    FullDomainState,
    PhysicalParams,
    analytic_eigs,
    analytic_macroscale_set,
    full_domain_rhs,
)
from .patchscheme import (
    EdgeValues,
    MacroValues,
    PatchScheme,
    PatchState,
    coupled_rhs,
    extract_macro_values,
    patch_rhs,
)
from .coupling import (
    CouplingOperator,
    SCHEME_NAMES,
    build_coupling,
    build_spectral,
    build_square_p,
    dft2,
    lagrange_basis,
    spectral_edge_values,
)
from .spectra import (
    ClassifiedSpectrum,
    Jacobian,
    assemble_jacobian,
    block_spectrum,
    classified_spectrum,
    classify,
    consistency_fit,
    eig,
    eigenvalue_error,
    make_scheme,
    roundoff_errors,
)
from .timesim import SimConfig, Snapshot, auto_dt, rk4_step, simulate
from .bench import (
    CostModelFit,
    TimingReport,
    fit_cost_model,
    measure_full_domain,
    measure_patch,
    predicted_ratio,
)

__all__ = [name for name in dir() if not name.startswith("_")]
