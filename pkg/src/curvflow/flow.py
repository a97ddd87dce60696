"""Semi-implicit evolution of a mesh under MCF, heat flow, or cMCF.

Every step solves ``(D - dt*L) x_new = D x`` where the three variants
differ only in which matrices get reassembled from the current positions:

* ``mcf``  - both the mass ``D`` and the stiffness ``L``;
* ``cmcf`` - the mass only, the stiffness stays the t=0 matrix;
* ``heat`` - neither (one cached factorization serves every step).

Failures inside a step (a non-positive-definite system or a degenerate
triangle) are not exceptions: they set a ``singular`` status and leave
the positions at the last valid step, matching a protocol that
terminates early when numerical instability is identified.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse

from . import fem, solver
from .errors import (
    BreakdownError,
    DegenerateTriangleError,
    MaxIterationsError,
    NotPositiveDefiniteError,
    SpecError,
)
from .mesh import TriMesh, surface_area, triangle_areas
from .metrics import (
    MetricRecord,
    convergence_delta,
    energy_decomposition_from_spectrum,
    qc_error,
    sphericity_variance,
    stretch_spectrum,
    vertex_masses,
)

VARIANTS = ("mcf", "heat", "cmcf")


class FlowStatus(enum.Enum):
    RUNNING = "running"
    CONVERGED = "converged"
    SINGULAR = "singular"
    FINISHED = "finished"


@dataclass(frozen=True)
class FlowConfig:
    """Parameters of one flow run. ``dt`` is the raw time-step; with
    ``normalize_area`` the surface is rescaled to unit area (about the
    mass-weighted barycenter) after every step, which effectively shrinks
    the time-step as the surface contracts."""

    variant: str = "cmcf"
    dt: float = 1e-3
    steps: int = 512
    normalize_area: bool = True
    recenter: bool = True
    boundary_mode: str = "none"  # "none" | "fixed"
    freeze_collapsed: bool = False
    snapshot_schedule: tuple = ()
    stop_eps: float = 0.0  # 0 disables the convergence stop
    solver: str = "direct"  # "direct" | "cg"
    cg_tol: float = 1e-10
    cg_max_iter: int = 0

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise SpecError(f"unknown flow variant {self.variant!r}")
        if not (self.dt > 0.0):
            raise SpecError("dt must be positive")
        if self.steps < 0:
            raise SpecError("steps must be >= 0")
        if self.boundary_mode not in ("none", "fixed"):
            raise SpecError(f"unknown boundary mode {self.boundary_mode!r}")
        if self.freeze_collapsed and self.variant != "mcf":
            raise SpecError("freeze_collapsed is only meaningful for variant='mcf'")
        if self.solver not in ("direct", "cg"):
            raise SpecError(f"unknown solver {self.solver!r}")
        if self.boundary_mode == "fixed" and self.normalize_area:
            raise SpecError(
                "unit-area normalization would move fixed boundary vertices; "
                "disable one of the two"
            )


@dataclass
class FlowState:
    """Positions and cached operators of a flow in progress."""

    mesh: TriMesh
    positions: np.ndarray
    step: int
    flow_time: float
    L0: sparse.csc_matrix
    D0: sparse.csc_matrix
    status: FlowStatus
    singular_step: int | None = None
    singular_cause: str | None = None
    warnings: tuple = ()
    fixed: np.ndarray = field(default=None, repr=False)  # indices held in place
    raw_positions: np.ndarray = field(default=None, repr=False)  # pre-normalization
    step_mass: sparse.csc_matrix = field(default=None, repr=False)  # D used in last solve
    step_stiffness: sparse.csc_matrix = field(default=None, repr=False)  # L used in last solve
    max_displacement: float = 0.0
    _heat_factor: object = field(default=None, repr=False)


@dataclass
class FlowResult:
    mesh: TriMesh
    config: FlowConfig
    state: FlowState
    records: list
    snapshots: list  # (step, positions) at the scheduled steps

    @property
    def status(self) -> FlowStatus:
        return self.state.status


def init(mesh: TriMesh, config: FlowConfig) -> FlowState:
    """Assemble the t=0 operators and stage the flow at step zero."""
    config.validate()
    D0 = fem.assemble_mass(mesh)
    L0 = fem.assemble_stiffness(mesh)
    warnings = ()
    fixed = np.array([], dtype=np.int64)
    if config.boundary_mode == "fixed":
        fixed = np.flatnonzero(mesh.boundary_mask)
    elif not mesh.is_closed:
        warnings = (
            "mesh has boundary but boundary_mode='none': the flow is only "
            "well-posed for watertight meshes or fixed boundaries",
        )
    status = FlowStatus.FINISHED if config.steps == 0 else FlowStatus.RUNNING
    return FlowState(
        mesh=mesh,
        positions=mesh.vertices.copy(),
        step=0,
        flow_time=0.0,
        L0=L0,
        D0=D0,
        status=status,
        warnings=warnings,
        fixed=fixed,
        step_mass=D0,
        step_stiffness=L0,
    )


def step(state: FlowState, config: FlowConfig) -> FlowState:
    """Advance one semi-implicit step; failures become a singular status."""
    if state.status is not FlowStatus.RUNNING:
        raise SpecError(f"cannot step a flow with status {state.status.value}")
    mesh = state.mesh
    x = state.positions
    fixed = state.fixed

    try:
        if config.variant == "mcf":
            face_mask = None
            if config.freeze_collapsed:
                face_mask, frozen = _collapsed_faces(mesh, x)
                fixed = np.union1d(state.fixed, frozen)
            D = fem.assemble_mass(mesh, x, face_mask=face_mask)
            L = fem.assemble_stiffness(mesh, x, face_mask=face_mask)
        elif config.variant == "cmcf":
            D = fem.assemble_mass(mesh, x)
            L = state.L0
        else:  # heat
            D = state.D0
            L = state.L0
        x_new = _solve_step(state, config, D, L, x, fixed)
    except (NotPositiveDefiniteError, BreakdownError) as e:
        return _singular(state, "not_positive_definite", str(e))
    except DegenerateTriangleError as e:
        return _singular(state, "degenerate_triangle", str(e))
    except MaxIterationsError as e:
        return _singular(state, "max_iterations", str(e))

    raw = x_new.copy()
    masses = vertex_masses(D)
    if config.normalize_area or config.recenter:
        bary = (masses[:, None] * x_new).sum(axis=0) / masses.sum()
        scale = 1.0
        if config.normalize_area:
            scale = 1.0 / np.sqrt(surface_area(mesh, x_new))
        # scale about the barycenter; recentering then drops the offset
        offset = 0.0 if config.recenter else bary
        x_new = offset + (x_new - bary) * scale

    disp = float(np.linalg.norm(x_new - x, axis=1).max())
    n_step = state.step + 1
    status = FlowStatus.RUNNING
    if config.stop_eps > 0.0 and disp < config.stop_eps:
        status = FlowStatus.CONVERGED
    elif n_step >= config.steps:
        status = FlowStatus.FINISHED
    return replace(
        state,
        positions=x_new,
        step=n_step,
        flow_time=state.flow_time + config.dt,
        status=status,
        raw_positions=raw,
        step_mass=D,
        step_stiffness=L,
        fixed=fixed,
        max_displacement=disp,
    )


def run(mesh: TriMesh, config: FlowConfig, observer=None) -> FlowResult:
    """Run the flow to completion, collecting metric records and snapshots.

    ``observer(state, record)`` is invoked synchronously after each
    completed step. Snapshots store post-normalization positions at the
    scheduled step indices.
    """
    state = init(mesh, config)
    schedule = set(config.snapshot_schedule)
    records: list[MetricRecord] = []
    snapshots = []
    if 0 in schedule:
        snapshots.append((0, state.positions.copy()))
    while state.status is FlowStatus.RUNNING:
        prev = state.positions
        state = step(state, config)
        if state.status is FlowStatus.SINGULAR:
            break
        record = _record(state, config, prev)
        records.append(record)
        if state.step in schedule:
            snapshots.append((state.step, state.positions.copy()))
        if observer is not None:
            observer(state, record)
    if records:
        records[-1].status = state.status.value
    return FlowResult(mesh=mesh, config=config, state=state, records=records, snapshots=snapshots)


def _singular(state: FlowState, cause: str, message: str) -> FlowState:
    return replace(
        state,
        status=FlowStatus.SINGULAR,
        singular_step=state.step + 1,
        singular_cause=cause,
        warnings=state.warnings + (message,),
    )


def _collapsed_faces(mesh: TriMesh, positions):
    """Mask of live faces, plus vertices whose whole one-ring collapsed."""
    areas = triangle_areas(positions, mesh.faces)
    mean = areas.mean()
    collapsed = areas < fem.DEGENERACY_RATIO * mean
    if not collapsed.any():
        return None, np.array([], dtype=np.int64)
    live = np.zeros(mesh.n_vertices, dtype=bool)
    live[mesh.faces[~collapsed].ravel()] = True
    touched = np.zeros(mesh.n_vertices, dtype=bool)
    touched[mesh.faces[collapsed].ravel()] = True
    frozen = np.flatnonzero(touched & ~live)
    return ~collapsed, frozen


def _solve_step(state, config, D, L, x, fixed):
    # heat flow factors once: its system (after any boundary elimination
    # with the never-changing fixed set) is the same at every step
    cacheable = config.variant == "heat"
    A = (D - config.dt * L).tocsc()
    rhs = D @ x
    if fixed.size:
        free = np.setdiff1d(np.arange(state.mesh.n_vertices), fixed, assume_unique=False)
        A_ff = A[free][:, free]
        rhs_f = rhs[free] - A[free][:, fixed] @ x[fixed]
        sol = _solve_system(state, config, A_ff, rhs_f, cacheable)
        x_new = x.copy()
        x_new[free] = sol
        return x_new
    return _solve_system(state, config, A, rhs, cacheable)


def _solve_system(state, config, A, rhs, cacheable):
    if config.solver == "cg":
        return solver.solve_cg(A, rhs, tol=config.cg_tol, max_iter=config.cg_max_iter)
    if cacheable:
        if state._heat_factor is None:
            state._heat_factor = solver.factorize(A)
        return state._heat_factor.solve(rhs)
    return solver.factorize(A).solve(rhs)


def _record(state: FlowState, config: FlowConfig, prev_positions) -> MetricRecord:
    """Metrics row for the state just produced by a step.

    Energies are those of the pre-normalization positions (the raw step
    output), measured two independent ways: the tilde decomposition from
    the stretch spectrum and the Dirichlet energy from the assembled t=0
    stiffness. The scale-sensitive quantities (area, sphericity,
    convergence delta) describe the final post-normalization positions.
    """
    mesh = state.mesh
    pos = state.positions
    # qc is scale- and translation-invariant, so the raw spectrum serves both
    spectrum = stretch_spectrum(mesh, state.raw_positions)
    if spectrum.any_degenerate:
        ea = ec = dirichlet = float("nan")
        qc = float("inf")
    else:
        ea, ec, _total = energy_decomposition_from_spectrum(spectrum)
        qc = qc_error(spectrum)
        dirichlet = fem.dirichlet_energy(state.L0, state.raw_positions)
    areas = triangle_areas(pos, mesh.faces)
    dirichlet_normalized = fem.dirichlet_energy(state.L0, pos / np.sqrt(areas.sum()))
    return MetricRecord(
        step=state.step,
        flow_time=state.flow_time,
        area=float(areas.sum()),
        convergence_delta=convergence_delta(prev_positions, pos, state.step_mass),
        qc_error=qc,
        sphericity_variance=sphericity_variance(pos, vertex_masses(state.step_mass)),
        dirichlet_energy=dirichlet,
        area_energy_tilde=ea,
        conformal_energy_tilde=ec,
        min_tri_area_ratio=float(areas.min() / areas.mean()),
        status=state.status.value,
        dirichlet_energy_normalized=dirichlet_normalized,
    )
