"""Affine formation maneuver control over equilibrium-unit frameworks.

The package splits along the pipeline: geometry (equilibrium units and
their weights), framework (graphs, Laplacians, verification), reconfig
(construction and add/remove actions), lcc_protocol (the packet-level
table update), controller (gain synthesis and interval schedules),
simulator (closed-loop runs), and cli (batch entry points).
"""

from .controller import (
    GainConditionReport,
    GainSet,
    IntegratorModel,
    RiccatiError,
    ScalingError,
    ScheduleState,
    auto_tune,
    build_integrator,
    check_gain_conditions,
    control_input,
    find_diagonal_Q,
    gain_vector,
    gamma_bar,
    initial_schedules,
    lyapunov_value,
    make_gains,
    phi,
    schedule_jump,
    solve_riccati,
    wsre_reset,
    wsre_step,
)
from .framework import (
    FrameworkFormatError,
    LaplacianBlocks,
    Layering,
    NominalFramework,
    NotLayerableError,
    VerificationReport,
    build_laplacian,
    compute_layers,
    desired_config,
    equilibrium_residual,
    in_affine_image,
    leaders_affinely_span,
    load_framework,
    localize_followers,
    save_framework,
    verify_affine_localizability,
)
from .geometry import (
    DEFAULT_TOL,
    DegenerateUnitError,
    PointSet,
    Tolerances,
    UnitWeights,
    affinely_independent,
    displacements,
    is_equilibrium_unit,
    solve_unit_weights,
)
from .lcc_protocol import (
    AddEvent,
    InEntry,
    LocalInfoTable,
    MessageLog,
    ProtocolError,
    RemoveEvent,
    run_lcc,
    tables_from_framework,
    tables_match_framework,
    weights_from_tables,
)
from .reconfig import (
    AttachmentSpec,
    InheritancePath,
    ReconfigError,
    ReconfigEvent,
    euc_construct,
    fia_add,
    find_inheritance_path,
    foa_remove,
)
from .simulator import (
    EpochTrace,
    ManeuverSchedule,
    Scenario,
    ScenarioError,
    SimResult,
    compute_errors,
    fit_log_decay,
    flow_bound_fraction,
    load_scenario,
    max_error_series,
    run,
    save_scenario,
    true_wsre,
    write_outputs,
)

__version__ = "0.1.0"

__all__ = [
    "AddEvent",
    "AttachmentSpec",
    "DEFAULT_TOL",
    "DegenerateUnitError",
    "EpochTrace",
    "FrameworkFormatError",
    "GainConditionReport",
    "GainSet",
    "InEntry",
    "InheritancePath",
    "IntegratorModel",
    "LaplacianBlocks",
    "Layering",
    "LocalInfoTable",
    "ManeuverSchedule",
    "MessageLog",
    "NominalFramework",
    "NotLayerableError",
    "PointSet",
    "ProtocolError",
    "ReconfigError",
    "ReconfigEvent",
    "RemoveEvent",
    "RiccatiError",
    "ScalingError",
    "Scenario",
    "ScenarioError",
    "ScheduleState",
    "SimResult",
    "Tolerances",
    "UnitWeights",
    "VerificationReport",
    "affinely_independent",
    "auto_tune",
    "build_integrator",
    "build_laplacian",
    "check_gain_conditions",
    "compute_errors",
    "compute_layers",
    "control_input",
    "desired_config",
    "displacements",
    "equilibrium_residual",
    "euc_construct",
    "fia_add",
    "find_diagonal_Q",
    "find_inheritance_path",
    "fit_log_decay",
    "flow_bound_fraction",
    "foa_remove",
    "gain_vector",
    "gamma_bar",
    "in_affine_image",
    "initial_schedules",
    "is_equilibrium_unit",
    "leaders_affinely_span",
    "load_framework",
    "load_scenario",
    "localize_followers",
    "lyapunov_value",
    "make_gains",
    "max_error_series",
    "phi",
    "run",
    "run_lcc",
    "save_framework",
    "save_scenario",
    "schedule_jump",
    "solve_riccati",
    "solve_unit_weights",
    "tables_from_framework",
    "tables_match_framework",
    "true_wsre",
    "verify_affine_localizability",
    "weights_from_tables",
    "write_outputs",
    "wsre_reset",
    "wsre_step",
]
