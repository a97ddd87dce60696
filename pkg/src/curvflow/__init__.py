"""curvflow: conformalized mean-curvature flow on triangle meshes."""

from .errors import (
    BreakdownError,
    ConnectivityMismatchError,
    CurvflowError,
    DegenerateTriangleError,
    DimensionMismatchError,
    EmptyMeshError,
    MaxIterationsError,
    NotPositiveDefiniteError,
    ParseError,
    SchemaError,
    SpecError,
    TopologyError,
)
from .fem import assemble_mass, assemble_stiffness, dirichlet_energy, dirichlet_gradient
from .flow import FlowConfig, FlowResult, FlowState, FlowStatus, init, run, step
from .mesh import MeshTopology, TriMesh, analyze_topology, surface_area, triangle_areas
from .mesh_io import load_mesh, save_mesh
from .metrics import (
    MetricRecord,
    StretchSpectrum,
    convergence_delta,
    energy_decomposition,
    qc_error,
    sphericity_variance,
    stretch_spectrum,
)
from .oracle import AnalyticCase, ComparisonReport, compare_discrete, radius
from .shapes import ShapeSpec, generate, mid_ring_radius
from .solver import Factorization, factorize, solve, solve_cg

__version__ = "0.1.0"
