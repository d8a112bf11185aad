"""Boundary-element engine and benchmark harness for acoustic transmission.

Solves time-harmonic sound propagation through multiple disjoint penetrable
objects with Galerkin boundary elements: five boundary-integral formulation
families, operator preconditioning (mass, Calderon, opposite-order, OSRC),
an analytic penetrable-sphere series for validation, field reconstruction
with PSNR scoring, and a benchmark command-line harness.
"""

from .acceptance import CriterionResult, format_report, run_acceptance
from .assembly import (
    AssemblyParams,
    DenseOperator,
    OperatorStore,
    assemble_boundary_operator,
    assemble_mass,
    assemble_laplace_beltrami,
    load_operator,
    save_operator,
)
from .bench import (
    BenchConfigError,
    BenchmarkConfig,
    BenchmarkRecord,
    BenchmarkReport,
    SceneSpec,
    list_cells,
    run_benchmark,
)
from .fields import (
    FieldError,
    FieldGrid,
    evaluate_field,
    export_field_csv,
    layer_potential,
    make_grid,
    psnr,
    tag_regions,
)
from .formulations import (
    BlockSystem,
    CombinedCoefficients,
    FormulationError,
    FormulationSpec,
    InterfaceSolution,
    SolutionTraces,
    build_system,
    incident_rhs,
    list_formulations,
    mass_weighted_norm,
    parse_formulation,
    predicted_counts,
    recover_traces,
    trace_deviation,
)
from .gmres import SolveReport, gmres
from .incident import PlaneWave
from .materials import MATERIALS, Material, material
from .mesh import (
    MeshError,
    TriangleMesh,
    geodesic_sphere,
    icosphere,
    read_msh,
    refine_for_frequency,
    write_msh,
)
from .preconditioners import (
    FeasibilityError,
    OSRCParams,
    PreconditionedSystem,
    PreconditionerSpec,
    attach_preconditioner,
    build_osrc_actions,
    is_feasible,
    list_preconditioners,
    parse_preconditioner,
)
from .scene import Scene, SceneError, ScatteringObject, sphere_scene, two_sphere_scene
from .sphere import SphereSeries, solve_sphere_series

__version__ = "0.1.0"
