"""Acceptance suite.

Every numbered test exercises one acceptance criterion at its frozen
tolerance and prints a single `[ACCEPTANCE] NN name: PASS/FAIL` line
(run pytest with `-s` or `-rA` to see the lines for passing tests).

Criterion 9's normalized-dumbbell sub-claim is known to fail: the
unit-area-renormalized Dirichlet energy is a conformal-distortion measure
(>= 1, equality iff conformal) and necessarily rises while the dumbbell
passes through its anisotropic collapse phase. The test asserts the
criterion as stated and is expected red; see the analysis in the
repository notes outside this package.
"""

import time

import numpy as np
import pytest
from scipy import sparse

from curvflow import fem, solver
from curvflow.errors import BreakdownError, NotPositiveDefiniteError
from curvflow.flow import FlowConfig, FlowStatus, run
from curvflow.metrics import energy_decomposition, vertex_masses
from curvflow.oracle import AnalyticCase, compare_discrete, default_protocol
from curvflow.shapes import ShapeSpec, generate


def report(number, name, ok, detail):
    line = f"[ACCEPTANCE] {number:02d} {name}: {'PASS' if ok else 'FAIL'} ({detail})"
    print(line, flush=True)
    assert ok, line


# ---------------------------------------------------------------- fixtures

DUMBBELL_SPEC = ShapeSpec.dumbbell()


@pytest.fixture(scope="module")
def dumbbell():
    return generate(DUMBBELL_SPEC)


@pytest.fixture(scope="module")
def icosphere3_mesh():
    return generate(ShapeSpec.icosphere(3))


@pytest.fixture(scope="module")
def dumbbell_runs(dumbbell):
    """The criterion-4 protocol: 512 normalized steps of each variant."""
    out = {}
    started = time.perf_counter()
    for variant in ("mcf", "heat", "cmcf"):
        config = FlowConfig(variant=variant, dt=1e-3, steps=512,
                            normalize_area=True, recenter=True)
        out[variant] = run(dumbbell, config)
    out["runtime"] = time.perf_counter() - started
    return out


@pytest.fixture(scope="module")
def icosphere_cmcf_normalized(icosphere3_mesh):
    config = FlowConfig(variant="cmcf", dt=1e-3, steps=512,
                        normalize_area=True, recenter=True)
    return run(icosphere3_mesh, config)


# ---------------------------------------------------------------- criteria

def test_01_sphere_table1_tracking():
    details = []
    ok = True
    for variant in ("mcf", "cmcf", "heat"):
        rep = compare_discrete(
            AnalyticCase("sphere", variant), ShapeSpec.icosphere(3),
            dt=1e-3, steps=100, estimate_order=True,
        )
        reduction = 1.0 - rep.refined_max_rel_error / rep.max_rel_error
        case_ok = (
            rep.status == "finished"
            and rep.max_rel_error <= 0.02
            and reduction >= 0.30
            and rep.runtime_s < 10.0
        )
        ok = ok and case_ok
        details.append(
            f"{variant}: err {rep.max_rel_error:.2e}, refined -{reduction:.0%}, "
            f"{rep.runtime_s:.1f}s"
        )
    report(1, "sphere-table1", ok, "; ".join(details))


def test_02_cylinder_table1_tracking():
    details = []
    ok = True
    started = time.perf_counter()
    spec, dt, steps = default_protocol("cylinder")
    for variant in ("mcf", "cmcf", "heat"):
        rep = compare_discrete(
            AnalyticCase("cylinder", variant), spec, dt=dt, steps=steps,
            estimate_order=False,
        )
        case_ok = (
            rep.status == "finished"
            and rep.max_rel_error <= 0.05
            and abs(rep.initial_speed - (-1.0)) <= 0.05
        )
        ok = ok and case_ok
        details.append(f"{variant}: err {rep.max_rel_error:.2e}, v0 {rep.initial_speed:+.3f}")
    elapsed = time.perf_counter() - started
    ok = ok and elapsed < 60.0
    report(2, "cylinder-table1", ok, "; ".join(details) + f"; total {elapsed:.0f}s")


def test_03_catenoid_stationarity():
    details = []
    ok = True
    spec, dt, steps = default_protocol("catenoid")
    for variant in ("mcf", "cmcf", "heat"):
        rep = compare_discrete(
            AnalyticCase("catenoid", variant), spec, dt=dt, steps=steps,
            estimate_order=False,
        )
        case_ok = rep.status == "finished" and rep.displacement_ratio <= 1e-3
        ok = ok and case_ok
        details.append(f"{variant}: disp/diag {rep.displacement_ratio:.2e}")
    report(3, "catenoid-stationarity", ok, "; ".join(details))


def test_04_dumbbell_singularity_dichotomy(dumbbell_runs):
    mcf = dumbbell_runs["mcf"].state
    heat = dumbbell_runs["heat"].state
    cmcf = dumbbell_runs["cmcf"].state
    elapsed = dumbbell_runs["runtime"]
    ok = (
        mcf.status is FlowStatus.SINGULAR
        and mcf.singular_step is not None
        and mcf.singular_step <= 32
        and heat.status is FlowStatus.FINISHED and heat.step == 512
        and cmcf.status is FlowStatus.FINISHED and cmcf.step == 512
        and elapsed < 120.0
    )
    report(
        4, "dumbbell-dichotomy", ok,
        f"mcf singular at {mcf.singular_step} ({mcf.singular_cause}); "
        f"heat {heat.step}/512; cmcf {cmcf.step}/512; {elapsed:.0f}s",
    )


def test_05_cmcf_limit_behavior(dumbbell_runs):
    result = dumbbell_runs["cmcf"]
    state = result.state
    records = result.records
    masses = vertex_masses(state.step_mass)
    pos = state.positions
    bary = (masses[:, None] * pos).sum(axis=0) / masses.sum()
    radii = np.linalg.norm(pos - bary, axis=1)
    r_mean = float((masses * radii).sum() / masses.sum())
    sphericity_ratio = records[-1].sphericity_variance / r_mean**2

    qc = [r.qc_error for r in records]
    tail = qc[-len(qc) // 10:]
    max_rise = max(b - a for a, b in zip(tail, tail[1:]))
    delta_final = records[-1].convergence_delta

    ok = (
        sphericity_ratio < 1e-3
        and qc[-1] < 1.15
        and max_rise <= 1e-3
        and delta_final < 1e-4  # unit-area length scale is 1 after normalization
    )
    report(
        5, "cmcf-limit", ok,
        f"sphericity/r^2 {sphericity_ratio:.2e}; qc {qc[-1]:.4f}; "
        f"tail rise {max_rise:.1e}; delta512 {delta_final:.1e}",
    )


def test_06_stiffness_reuse_and_scale_invariance(icosphere3_mesh, dumbbell_runs):
    from curvflow.flow import init, step

    mesh = icosphere3_mesh
    config = FlowConfig(variant="cmcf", dt=1e-3, steps=8)
    state = init(mesh, config)
    L0 = state.L0
    bit_identical = True
    while state.status is FlowStatus.RUNNING:
        state = step(state, config)
        bit_identical = bit_identical and state.step_stiffness is L0
        bit_identical = bit_identical and np.array_equal(state.step_stiffness.data, L0.data)

    L0_arr = L0.toarray()
    scale_ok = True
    worst = 0.0
    for alpha in (0.5, 2.0, 10.0):
        L_scaled = fem.assemble_stiffness(mesh, alpha * mesh.vertices).toarray()
        err = np.abs(L_scaled - L0_arr).max() / np.abs(L0_arr).max()
        worst = max(worst, err)
        scale_ok = scale_ok and err <= 1e-12
    ok = bit_identical and scale_ok
    report(6, "stiffness-reuse", ok,
           f"bit-identical over 8 steps: {bit_identical}; scaled-copy err {worst:.1e}")


def test_07_appendix_energy_identities(icosphere3_mesh):
    mesh = icosphere3_mesh
    L0 = fem.assemble_stiffness(mesh)
    rng = np.random.default_rng(17)
    worst_sum = 0.0
    for _ in range(100):
        cur = mesh.vertices + 0.2 * rng.standard_normal(mesh.vertices.shape)
        ea, ec, _ = energy_decomposition(mesh, cur)
        e_dir = fem.dirichlet_energy(L0, cur)
        worst_sum = max(worst_sum, abs(ea + ec - e_dir) / e_dir)
    sum_ok = worst_sum <= 1e-10

    worst_conf = 0.0
    for alpha in (0.3, 1.0, 2.0, 7.5):
        _, ec, _ = energy_decomposition(mesh, alpha * mesh.vertices)
        worst_conf = max(worst_conf, abs(ec))
    conf_ok = worst_conf <= 1e-12

    lam = rng.uniform(0.1, 10.0, size=(10_000, 2))
    d = (lam[:, 0] * lam[:, 1]) ** 2
    t = (lam**2).sum(axis=1)
    identity_err = np.abs(2 * d / t + (t * t - 4 * d) / (2 * t) - t / 2) / (t / 2)
    ident_ok = identity_err.max() <= 1e-12

    ok = sum_ok and conf_ok and ident_ok
    report(7, "appendix-energies", ok,
           f"sum err {worst_sum:.1e}; conformal-on-scale {worst_conf:.1e}; "
           f"identity err {identity_err.max():.1e}")


def test_08_gradient_finite_difference():
    from conftest import grid_mesh

    mesh = grid_mesh(10, 5, z_noise=0.05, seed=4)  # 50 vertices
    L = fem.assemble_stiffness(mesh)
    rng = np.random.default_rng(23)
    x = mesh.vertices + 0.01 * rng.standard_normal(mesh.vertices.shape)
    g = fem.dirichlet_gradient(L, x)
    h = 1e-5
    worst = 0.0
    for _ in range(20):
        d = rng.standard_normal(x.shape)
        d /= np.linalg.norm(d)
        fd = (fem.dirichlet_energy(L, x + h * d) - fem.dirichlet_energy(L, x - h * d)) / (2 * h)
        analytic = float(np.sum(g * d))
        worst = max(worst, abs(fd - analytic) / max(abs(analytic), 1e-12))
    ok = worst <= 1e-6
    report(8, "gradient-check", ok, f"max rel err {worst:.1e} over 20 directions")


def test_09a_energy_monotonicity_normalization_off(icosphere3_mesh, dumbbell):
    details = []
    ok = True
    for name, mesh, steps in (("icosphere", icosphere3_mesh, 100), ("dumbbell", dumbbell, 200)):
        config = FlowConfig(variant="cmcf", dt=1e-3, steps=steps,
                            normalize_area=False, recenter=False)
        result = run(mesh, config)
        e = np.array([r.dirichlet_energy for r in result.records])
        rises = np.diff(e) / e[:-1]
        worst = rises.max()
        ok = ok and result.status is FlowStatus.FINISHED and worst <= 1e-10
        details.append(f"{name}: max rise {worst:.1e}")
    report(9, "energy-monotone-raw", ok, "; ".join(details))


def test_09b_energy_monotonicity_normalization_on(icosphere_cmcf_normalized, dumbbell_runs):
    details = []
    ok = True
    for name, result in (("icosphere", icosphere_cmcf_normalized),
                         ("dumbbell", dumbbell_runs["cmcf"])):
        e = np.array([r.dirichlet_energy_normalized for r in result.records])
        rises = np.diff(e[5:]) / e[5:-1]  # 5-step burn-in
        worst = rises.max()
        ok = ok and worst <= 1e-8
        details.append(f"{name}: max rise after burn-in {worst:.1e}")
    report(9, "energy-monotone-normalized", ok, "; ".join(details))


def test_10_solver_failure_semantics():
    indefinite = [
        np.array([[1.0, 2.0], [2.0, 1.0]]),
        np.diag([1.0, -1e-9, 3.0]),
        np.array([[0.0, 1.0], [1.0, 0.0]]),
    ]
    direct_ok = True
    for A in indefinite:
        try:
            solver.factorize(sparse.csc_matrix(A))
            direct_ok = False
        except NotPositiveDefiniteError:
            pass
    cg_ok = True
    try:
        solver.solve_cg(sparse.csc_matrix(np.diag([1.0, 1.0, -1.0])),
                        np.array([0.0, 0.0, 1.0]))
        cg_ok = False
    except BreakdownError:
        pass

    rng = np.random.default_rng(31)
    agree = 0.0
    for subdiv in (1, 2):
        mesh = generate(ShapeSpec.icosphere(subdiv))
        A = (fem.assemble_mass(mesh) - 1e-3 * fem.assemble_stiffness(mesh)).tocsc()
        b = rng.standard_normal((A.shape[0], 3))
        xd = solver.solve(solver.factorize(A), b)
        xc = solver.solve_cg(A, b, tol=1e-12)
        agree = max(agree, float(np.abs(xd - xc).max() / np.abs(xd).max()))
    B = rng.standard_normal((120, 120))
    S = sparse.csc_matrix(B @ B.T + 120 * np.eye(120))
    b = rng.standard_normal(120)
    agree = max(agree, float(np.abs(
        solver.solve(solver.factorize(S), b) - solver.solve_cg(S, b, tol=1e-12)
    ).max() / np.abs(solver.solve(solver.factorize(S), b)).max()))

    ok = direct_ok and cg_ok and agree <= 1e-8
    report(10, "solver-failure-semantics", ok,
           f"indefinite rejected: {direct_ok}; CG breakdown: {cg_ok}; "
           f"direct-vs-CG {agree:.1e}")
