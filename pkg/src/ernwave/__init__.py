"""
Nonlinear waves on the exterior of an extremal Reissner-Nordstrom black hole.

Evolves ``Box_g psi = sqrt(D) A(psi) Q(psi)`` on horizon-penetrating slices and
records the horizon conservation law, decay rates and energy hierarchies.
"""

__version__ = "0.1.0"

from .geometry import (  # noqa: E402
    DomainError,
    FoliationSpec,
    SpacetimeParams,
    ct_omega,
    ct_radius,
    horizon_factor,
    photon_sphere_radius,
    tortoise,
)
from .fields import AngularBasis, FieldState, Grid, GridSpec, ModeSet, make_grid  # noqa: E402
from .dynamics import (  # noqa: E402
    Bump,
    Coupling,
    EvolutionConfig,
    InitialData,
    NumericalFailure,
    Problem,
    RunResult,
    evolve,
)
from .diagnostics import (  # noqa: E402
    Recorder,
    decay_fit,
    energy_flux,
    hardy_ratio,
    horizon_trace,
    initial_horizon_charge,
    instability_report,
)
from .couch_torrence import ChartTag, RadialField, ct_audit, ct_pullback  # noqa: E402
from .config import ConfigError, RunConfig, parse_config, parse_config_text  # noqa: E402
from .runner import ConvergenceReport, RunManifest, convergence_suite, run  # noqa: E402
