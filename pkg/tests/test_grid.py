"""Grid discretization checks: operator exactness, quadrature, energy
integrals, the heat-step system, and the field dump format."""

import io

import numpy as np
import pytest
import scipy.sparse.linalg as spla

from thermovisc.constitutive import DomainError, MaterialModel
from thermovisc.grid import Grid2, State, read_field, write_field

MAT = MaterialModel()


@pytest.fixture(scope="module")
def grid():
    return Grid2(8, 6)


def id_state(grid, theta=1.0):
    return State.create(grid, grid.nodes.copy(),
                        np.full(grid.nnode, theta), 0.0)


# ---------------------------------------------------------------------------
# gradients / Hessians
# ---------------------------------------------------------------------------

def test_gradient_exact_identity(grid):
    F = grid.gradient_at_qp(grid.nodes)
    assert np.max(np.abs(F - np.eye(2))) <= 1e-14
    assert np.max(np.abs(grid.hessian_at_qp(grid.nodes))) <= 1e-13


def test_gradient_exact_affine(grid):
    A = np.array([[1.3, -0.4], [0.2, 0.8]])
    b = np.array([0.1, -0.2])
    y = grid.nodes @ A.T + b
    assert np.max(np.abs(grid.gradient_at_qp(y) - A)) <= 1e-13


def test_scalar_gradient(grid):
    a = np.array([0.7, -1.1])
    f = grid.nodes @ a + 0.3
    g = grid.gradient_at_qp(f)
    assert np.max(np.abs(g - a)) <= 1e-13


def test_hessian_exact_quadratics(grid):
    x = grid.nodes
    y = np.column_stack([x[:, 0] ** 2, np.zeros(grid.nnode)])
    H = grid.hessian_at_qp(y)
    assert np.max(np.abs(H[:, 0, 0, 0] - 2.0)) <= 1e-12  # component (1, 11) = 2
    assert np.max(np.abs(H[:, 0, 1, 1])) <= 1e-12
    assert np.max(np.abs(H[:, 1])) <= 1e-12
    # full quadratic with mixed term, exact everywhere including boundaries
    y2 = np.column_stack([2 * x[:, 0] ** 2 - x[:, 0] * x[:, 1],
                          0.5 * x[:, 1] ** 2 + 3 * x[:, 0] * x[:, 1]])
    H2 = grid.hessian_at_qp(y2)
    assert np.max(np.abs(H2[:, 0, 0, 0] - 4.0)) <= 1e-11
    assert np.max(np.abs(H2[:, 0, 0, 1] + 1.0)) <= 1e-11
    assert np.max(np.abs(H2[:, 1, 1, 1] - 1.0)) <= 1e-11
    assert np.max(np.abs(H2[:, 1, 0, 1] - 3.0)) <= 1e-11


def test_dimension_mismatch_errors(grid):
    with pytest.raises(ValueError):
        grid.gradient_at_qp(np.zeros(7))
    with pytest.raises(ValueError):
        grid.hessian_at_qp(np.zeros((grid.nnode, 3)))


def test_adjoint_consistency(grid):
    rng = np.random.default_rng(0)
    y = rng.normal(size=(grid.nnode, 2))
    r = rng.normal(size=(grid.nqp, 2, 2))
    lhs = np.sum(grid.gradient_at_qp(y) * r)
    rhs = np.sum(y * grid.gradient_adjoint(r))
    assert abs(lhs - rhs) <= 1e-10 * (1 + abs(lhs))
    rH = rng.normal(size=(grid.nqp, 2, 2, 2))
    rH[:, :, 0, 1] = rH[:, :, 1, 0]
    lhs = np.sum(grid.hessian_at_qp(y) * rH)
    rhs = np.sum(y * grid.hessian_adjoint(rH))
    assert abs(lhs - rhs) <= 1e-9 * (1 + abs(lhs))


# ---------------------------------------------------------------------------
# quadrature / boundary structure
# ---------------------------------------------------------------------------

def test_quadrature_exact_constant(grid):
    val = grid.integrate(np.full(grid.nqp, 2.75))
    assert abs(val - 2.75) <= 1e-12


def test_boundary_labels(grid):
    # every boundary node labeled exactly once; Dirichlet = left edge
    assert grid.dirichlet_nodes.size == grid.ny + 1
    x = grid.nodes[grid.dirichlet_nodes]
    assert np.all(x[:, 0] == 0.0)
    assert grid.boundary_nodes.size == 2 * grid.nx + 2 * grid.ny
    # trace measures: |Gamma| = 4, |Gamma_N| = 3 (unit square, left clamped)
    assert abs(np.sum(grid.wb) - 4.0) <= 1e-12
    assert abs(np.sum(grid.wbN) - 3.0) <= 1e-12


# ---------------------------------------------------------------------------
# state invariants
# ---------------------------------------------------------------------------

def test_state_rejects_negative_temperature(grid):
    th = np.full(grid.nnode, 1.0)
    th[5] = -1e-12
    with pytest.raises(DomainError, match="nonnegative"):
        State.create(grid, grid.nodes.copy(), th, 0.0)


def test_state_rejects_dirichlet_violation(grid):
    y = grid.nodes.copy()
    y[grid.dirichlet_nodes[0]] += 0.1
    with pytest.raises(DomainError, match="Dirichlet"):
        State.create(grid, y, np.ones(grid.nnode), 0.0)


def test_state_rejects_inverted_elements(grid):
    y = grid.nodes.copy()
    inner = np.where((grid.nodes[:, 0] > 0.3) & (grid.nodes[:, 0] < 0.7)
                     & (grid.nodes[:, 1] > 0.3) & (grid.nodes[:, 1] < 0.7))[0]
    y[inner, 0] -= 0.5  # fold the middle strip over
    with pytest.raises(DomainError, match="det"):
        State.create(grid, y, np.ones(grid.nnode), 0.0)


# ---------------------------------------------------------------------------
# energy integrals
# ---------------------------------------------------------------------------

def test_energy_zero_at_identity_critical(grid):
    st = id_state(grid, theta=MAT.theta_c)
    E = grid.integrate_energy(st, MAT)
    assert abs(E["E_shifted"]) <= 1e-12


def test_shifted_term_vanishes_at_critical_temperature(grid):
    rng = np.random.default_rng(1)
    y = grid.nodes + 0.02 * rng.normal(size=(grid.nnode, 2))
    y[grid.dirichlet_nodes] = grid.nodes[grid.dirichlet_nodes]
    st = State.create(grid, y, np.full(grid.nnode, MAT.theta_c), 0.0)
    E = grid.integrate_energy(st, MAT)
    # at theta = theta_c: E_shifted = M + int W_cpl(F, theta_c) exactly
    assert E["E_shifted"] == pytest.approx(E["M"] + E["Wcpl"], abs=1e-13)


def test_initial_energy_eps_squared(grid):
    # smooth (u0, mu0): E_shifted of (id + eps u0, theta_c + eps^alpha mu0) <= C eps^2
    from thermovisc.config import DemoInitialDisplacement, DemoInitialTemperature
    u0 = DemoInitialDisplacement()(grid.nodes)
    mu0 = DemoInitialTemperature()(grid.nodes)
    ratios = []
    for eps in (0.4, 0.2, 0.1, 0.05):
        st = State.create(grid, grid.nodes + eps * u0,
                          MAT.theta_c + eps**MAT.alpha * mu0, 0.0)
        ratios.append(grid.integrate_energy(st, MAT, eps)["E_shifted"] / eps**2)
    ratios = np.array(ratios)
    assert np.max(ratios) / np.min(ratios) <= 3.0


def test_integrate_energy_rejects_infeasible():
    # bypass State.create validation to exercise the explicit energy guard
    g = Grid2(4, 4)
    st = State(y=g.nodes.copy(), theta=np.ones(g.nnode), t=0.0, grid=g)
    st.y[12] -= [0.4, 0.0]
    if np.all(np.linalg.det(g.gradient_at_qp(st.y)) > 0):
        pytest.skip("perturbation did not invert an element")
    with pytest.raises(DomainError, match="infeasible"):
        g.integrate_energy(st, MAT)


# ---------------------------------------------------------------------------
# heat system
# ---------------------------------------------------------------------------

def test_heat_constant_state_is_fixed_point(grid):
    st = id_state(grid, 0.7)
    A, b, _ = grid.assemble_heat_system(
        st, st.y, MAT, 1e-2, lambda x: np.full(x.shape[0], 0.7))
    th1 = spla.spsolve(A.tocsc(), b)
    assert np.max(np.abs(th1 - 0.7)) <= 1e-13


def test_heat_positivity_random_sources(grid):
    mat0 = MaterialModel(kappa=0.0)
    rng = np.random.default_rng(2)
    for trial in range(5):
        th0 = rng.random(grid.nnode) * 2.0
        st = State.create(grid, grid.nodes.copy(), th0, 0.0)
        src = rng.random(grid.nqp) * 10.0
        A, b, _ = grid.assemble_heat_system(
            st, st.y, mat0, 1e-2, lambda x: np.zeros(x.shape[0]),
            extra_sources=src)
        th1 = spla.spsolve(A.tocsc(), b)
        assert np.min(th1) >= 0.0


def test_heat_conservation_kappa_zero(grid):
    mat0 = MaterialModel(kappa=0.0)
    rng = np.random.default_rng(3)
    th0 = 0.5 + 0.4 * rng.random(grid.nnode)
    st = State.create(grid, grid.nodes.copy(), th0, 0.0)
    A, b, info = grid.assemble_heat_system(
        st, st.y, mat0, 1e-2, lambda x: np.zeros(x.shape[0]))
    th1 = spla.spsolve(A.tocsc(), b)
    change = np.dot(info["ML_cv"], th1 - th0)
    assert abs(change) <= 1e-12


def test_heat_rhs_affine_matrix_independent(grid):
    rng = np.random.default_rng(4)
    th0 = 0.5 + 0.4 * rng.random(grid.nnode)
    st = State.create(grid, grid.nodes.copy(), th0, 0.0)
    tf = lambda x: np.zeros(x.shape[0])
    src = rng.random(grid.nqp)
    A0, b0, _ = grid.assemble_heat_system(st, st.y, MAT, 1e-2, tf)
    A1, b1, _ = grid.assemble_heat_system(st, st.y, MAT, 1e-2, tf,
                                          extra_sources=src)
    A2, b2, _ = grid.assemble_heat_system(st, st.y, MAT, 1e-2, tf,
                                          extra_sources=3.0 * src)
    assert abs(A1 - A2).max() == 0.0
    np.testing.assert_allclose(b2 - b0, 3.0 * (b1 - b0), rtol=1e-10, atol=1e-13)


def test_heat_robin_residual_vanishes_for_matching_constant(grid):
    # theta == theta_flat == c: Robin contribution cancels exactly
    st = id_state(grid, 1.3)
    A, b, info = grid.assemble_heat_system(
        st, st.y, MAT, 5e-3, lambda x: np.full(x.shape[0], 1.3))
    robin_m = MAT.kappa * grid.trace_lump * st.theta
    assert np.max(np.abs(info["robin_rhs"] - robin_m)) <= 1e-13


def test_heat_rejects_bad_dt(grid):
    st = id_state(grid)
    with pytest.raises(ValueError):
        grid.assemble_heat_system(st, st.y, MAT, -1.0,
                                  lambda x: np.zeros(x.shape[0]))


# ---------------------------------------------------------------------------
# field dumps
# ---------------------------------------------------------------------------

def test_field_dump_roundtrip_and_format(grid):
    rng = np.random.default_rng(5)
    y = rng.normal(size=(grid.nnode, 2))
    th = rng.random(grid.nnode)
    buf = io.StringIO()
    write_field(buf, "y", grid, y)
    write_field(buf, "theta", grid, th)
    text = buf.getvalue()
    first = text.splitlines()[0]
    assert first == f"field y nx {grid.nx} ny {grid.ny} comps 2"
    buf.seek(0)
    name, y2 = read_field(buf)
    assert name == "y"
    np.testing.assert_array_equal(y2, y)  # 17 significant digits roundtrip
    name, th2 = read_field(buf)
    assert name == "theta" and th2.ndim == 1
    np.testing.assert_array_equal(th2, th)


def test_read_field_rejects_malformed():
    with pytest.raises(ValueError, match="malformed"):
        read_field(io.StringIO("not a field header\n"))


def test_grid_rejects_small():
    with pytest.raises(ValueError):
        Grid2(3, 8)
