"""Pointwise constitutive checks: closed-form values, derivative consistency,
frame indifference, inverse maps, truncations, and the regularized positive
part."""

import math

import numpy as np
import pytest

import thermovisc.constitutive as cst
from thermovisc.constitutive import (DomainError, MaterialModel, dissipation,
                                     dist_SO2, elastic_energy, coupling_energy,
                                     free_energy, heat_capacity, hyper_energy,
                                     internal_energy, linearized_tensors,
                                     phi_beta, phi_beta_d1, phi_beta_d2,
                                     psi_inverse, random_rotation, regularize_xi,
                                     stress_derivatives, stress_dF, truncate_xi,
                                     validate_material)

MAT = MaterialModel()
NO_BUMP = MaterialModel(bump_amplitude=0.0)
ID = np.eye(2)[None]


def sample_F(n, seed=0, det_lo=0.3, det_hi=3.0):
    rng = np.random.default_rng(seed)
    F = cst._sample_F(rng, n)
    J = cst.det2(F)
    keep = (J > det_lo) & (J < det_hi)
    return F[keep]


# ---------------------------------------------------------------------------
# elastic energy
# ---------------------------------------------------------------------------

def test_elastic_identity_no_bump():
    # closed form: What(Id) = 0, det penalty 0, shift C1*theta_c*(1-log theta_c)
    assert elastic_energy(NO_BUMP, ID)[0] == pytest.approx(-NO_BUMP.C1, abs=1e-14)


def test_elastic_rotation_invariant():
    rng = np.random.default_rng(1)
    Q = random_rotation(rng, 50)
    vals = elastic_energy(MAT, Q)
    assert np.max(np.abs(vals - vals[0])) <= 1e-12


def test_elastic_diag_stretch_value():
    # |F^T F - Id|^2 = 9, (1/2 - 1)^4 = 0.0625 for F = diag(2, 1), q = 4
    F = np.diag([2.0, 1.0])[None]
    val = elastic_energy(NO_BUMP, F)[0]
    assert val == pytest.approx(9.0 + 0.0625 - NO_BUMP.C1, rel=1e-14)


def test_elastic_rejects_nonpositive_det():
    with pytest.raises(DomainError):
        elastic_energy(MAT, np.diag([1.0, -1.0])[None])


# ---------------------------------------------------------------------------
# coupling energy
# ---------------------------------------------------------------------------

def test_coupling_zero_at_absolute_zero():
    F = sample_F(50, seed=2)
    assert np.max(np.abs(coupling_energy(MAT, F, np.zeros(F.shape[0])))) == 0.0


def test_coupling_at_critical_temperature():
    # a(theta_c) = 1, g(Id) = 0 -> C1 theta_c (1 - log theta_c)
    val = coupling_energy(MAT, ID, np.array([MAT.theta_c]))[0]
    expect = MAT.C1 * MAT.theta_c * (1.0 - math.log(MAT.theta_c))
    assert val == pytest.approx(expect, rel=1e-14)


def test_coupling_eps_independent_at_critical_temperature():
    # h(theta_c) = 0 kills the eps-family exactly
    mat = MaterialModel(beta0=0.7, alpha=1.0)
    F = sample_F(20, seed=3)
    th = np.full(F.shape[0], mat.theta_c)
    a = coupling_energy(mat, F, th, eps=1.0)
    b = coupling_energy(mat, F, th, eps=0.25)
    np.testing.assert_array_equal(a, b)


def test_coupling_rejects_negative_theta():
    with pytest.raises(DomainError):
        coupling_energy(MAT, ID, np.array([-0.1]))


# ---------------------------------------------------------------------------
# hypergradient energy
# ---------------------------------------------------------------------------

def test_hyper_zero():
    assert hyper_energy(MAT, np.zeros((2, 2, 2))) == 0.0


def test_hyper_unit_norm():
    mat = MaterialModel(c_H=1.0)
    G = np.zeros((1, 2, 2, 2))
    G[0, 0, 0, 0] = 1.0
    assert hyper_energy(mat, G)[0] == pytest.approx(1.0)


def test_hyper_frame_indifferent():
    rng = np.random.default_rng(4)
    G = rng.normal(size=(30, 2, 2, 2))
    Q = random_rotation(rng, 30)
    QG = np.einsum("nij,njkl->nikl", Q, G)
    np.testing.assert_allclose(hyper_energy(MAT, QG), hyper_energy(MAT, G),
                               rtol=1e-12)


# ---------------------------------------------------------------------------
# free energy
# ---------------------------------------------------------------------------

def test_free_energy_zero_at_identity_critical():
    assert abs(free_energy(MAT, ID, np.array([MAT.theta_c]))[0]) <= 1e-14


def test_free_energy_zero_on_rotations_and_global_min():
    rng = np.random.default_rng(5)
    Q = random_rotation(rng, 100)
    th = np.full(100, MAT.theta_c)
    assert np.max(np.abs(free_energy(MAT, Q, th))) <= 1e-12
    F = sample_F(1000, seed=6, det_lo=0.05, det_hi=10.0)
    vals = free_energy(MAT, F, np.full(F.shape[0], MAT.theta_c))
    assert np.min(vals) >= -1e-12


def test_free_energy_quadratic_growth():
    # What >= dist^2 via polar decomposition, so c0 = 1 works exactly
    F = sample_F(1000, seed=7, det_lo=0.05, det_hi=10.0)
    d2 = dist_SO2(F) ** 2
    vals = free_energy(MAT, F, np.full(F.shape[0], MAT.theta_c))
    mask = d2 > 1e-12
    assert np.min(vals[mask] / d2[mask]) >= 1.0 - 1e-10


# ---------------------------------------------------------------------------
# stress derivatives
# ---------------------------------------------------------------------------

def test_derivatives_match_finite_differences():
    rng = np.random.default_rng(8)
    err = cst._derivative_consistency(MaterialModel(beta0=0.1, alpha=1.5), rng, 100)
    assert err <= 1e-6


def test_coupling_stress_vanishes_at_zero_temperature():
    F = sample_F(40, seed=9)
    dF0 = stress_dF(MAT, F, np.zeros(F.shape[0]))
    for th in (1e-6, 1e-8):
        d = stress_dF(MAT, F, np.full(F.shape[0], th)) - dF0
        assert np.max(np.abs(d)) <= 100.0 * th  # ~ a'(0) * |dg| * theta


def test_entropy_second_derivative_window():
    # c_0 <= -theta d2theta W_cpl <= C_0 on samples
    F = sample_F(200, seed=10)
    th = np.exp(np.random.default_rng(11).uniform(np.log(1e-3), np.log(50), F.shape[0]))
    der = stress_derivatives(MAT, F, th)
    cv = -th * der["dthetatheta_W"]
    lo, hi = MAT.cv_bounds
    assert np.min(cv) > 0.0
    assert np.min(cv) >= lo - 1e-9 and np.max(cv) <= hi + 1e-9


def test_cross_derivative_eps_family_at_identity():
    # dFtheta W_cpl(Id, theta_c) = eps^(alpha-1) beta0 h'(theta_c) dg(Id)
    #                            = eps^(alpha-1) beta0 2 A Id
    mat = MaterialModel(beta0=0.3, alpha=1.5)
    for eps in (1.0, 0.25):
        der = stress_derivatives(mat, ID, np.array([mat.theta_c]), eps)
        expect = eps ** 0.5 * 0.3 * 2.0 * mat.bump_amplitude * np.eye(2)
        np.testing.assert_allclose(der["dFtheta_W"][0], expect, atol=1e-14)


def test_theta_derivative_requires_positive_theta():
    with pytest.raises(DomainError):
        stress_derivatives(MAT, ID, np.array([0.0]))


# ---------------------------------------------------------------------------
# internal energy / heat capacity / inverse map
# ---------------------------------------------------------------------------

def test_internal_energy_zero_at_zero():
    F = sample_F(30, seed=12)
    assert np.max(np.abs(internal_energy(MAT, F, np.zeros(F.shape[0])))) == 0.0


def test_heat_capacity_at_identity_critical():
    assert heat_capacity(MAT, ID, np.array([MAT.theta_c]))[0] == pytest.approx(MAT.C1)
    coupled = MaterialModel(beta0=0.1, alpha=1.0)
    assert heat_capacity(coupled, ID, np.array([coupled.theta_c]))[0] \
        == pytest.approx(coupled.C1)


def test_internal_energy_monotone():
    F = sample_F(20, seed=13)
    grid = np.linspace(0.0, 5.0, 101)
    vals = internal_energy(MAT, F[:, None], grid[None, :])
    assert np.min(np.diff(vals, axis=1)) > 0.0


def test_psi_inverse_zero_and_roundtrip():
    F = sample_F(200, seed=14)
    assert np.all(psi_inverse(MAT, F, np.zeros(F.shape[0])) == 0.0)
    rng = np.random.default_rng(15)
    th = np.exp(rng.uniform(np.log(1e-3), np.log(30.0), F.shape[0]))
    w = internal_energy(MAT, F, th)
    th_back = psi_inverse(MAT, F, w)
    # roundtrip both ways within tol_psi
    assert np.max(np.abs(th_back - th)) <= 1e-10 * np.maximum(1.0, th).max()
    assert np.max(np.abs(internal_energy(MAT, F, th_back) - w)
                  / np.maximum(1.0, w)) <= 1e-12


def test_psi_inverse_slope_is_inverse_heat_capacity():
    F = sample_F(100, seed=16)
    rng = np.random.default_rng(17)
    th = np.exp(rng.uniform(np.log(0.1), np.log(10.0), F.shape[0]))
    w = internal_energy(MAT, F, th)
    dw = 1e-6 * np.maximum(1.0, w)
    slope = (psi_inverse(MAT, F, w + dw) - psi_inverse(MAT, F, w - dw)) / (2 * dw)
    np.testing.assert_allclose(slope * heat_capacity(MAT, F, th), 1.0, rtol=1e-6)


def test_psi_inverse_rejects_negative_w():
    with pytest.raises(DomainError):
        psi_inverse(MAT, ID, np.array([-1.0]))


# ---------------------------------------------------------------------------
# dissipation
# ---------------------------------------------------------------------------

def test_dissipation_zero_rate():
    F = sample_F(10, seed=18)
    d = dissipation(MAT, F, np.zeros_like(F), np.ones(F.shape[0]))
    assert np.all(d["R"] == 0.0) and np.all(d["xi"] == 0.0)
    assert np.all(d["stress"] == 0.0)


def test_xi_equals_twice_R_and_stress_pairing():
    rng = np.random.default_rng(19)
    F = sample_F(300, seed=20)
    Fdot = rng.normal(size=F.shape)
    th = np.exp(rng.uniform(-3, 3, F.shape[0]))
    d = dissipation(MAT, F, Fdot, th)
    np.testing.assert_array_equal(d["xi"], 2.0 * d["R"])
    pair = np.sum(d["stress"] * Fdot, axis=(-1, -2))
    np.testing.assert_allclose(pair, d["xi"], rtol=1e-12, atol=1e-13)


def test_dissipation_identity_symmetric_rate():
    mat = MaterialModel(eta_D=0.0)
    e = np.array([[[0.3, 0.1], [0.1, -0.2]]])
    d = dissipation(mat, ID, e, np.array([1.0]))
    assert d["xi"][0] == pytest.approx(4.0 * np.sum(e * e), rel=1e-14)


def test_dissipation_bounds():
    # c0 |Cdot|^2 <= Cdot : D Cdot <= (1 + eta_D) |Cdot|^2
    rng = np.random.default_rng(21)
    F = sample_F(300, seed=22)
    Fdot = rng.normal(size=F.shape)
    th = np.exp(rng.uniform(-3, 3, F.shape[0]))
    d = dissipation(MAT, F, Fdot, th)
    Cdot = cst.tmul2(Fdot, F)
    Cdot = Cdot + np.swapaxes(Cdot, -1, -2)
    n2 = cst._frob2(Cdot)
    mask = n2 > 1e-12
    ratio = 2.0 * d["R"][mask] / n2[mask]
    assert np.min(ratio) >= 1.0 - 1e-12
    assert np.max(ratio) <= 1.0 + MAT.eta_D + 1e-12


def test_dynamic_frame_indifference():
    rng = np.random.default_rng(23)
    F = sample_F(200, seed=24)
    n = F.shape[0]
    Fdot = rng.normal(size=F.shape)
    th = np.exp(rng.uniform(-2, 2, n))
    Q = random_rotation(rng, n)
    QF = np.einsum("nij,njk->nik", Q, F)
    QFd = np.einsum("nij,njk->nik", Q, Fdot)
    a = dissipation(MAT, F, Fdot, th)["R"]
    b = dissipation(MAT, QF, QFd, th)["R"]
    assert np.max(np.abs(a - b) / (1.0 + a)) <= 1e-10


# ---------------------------------------------------------------------------
# truncation / regularization
# ---------------------------------------------------------------------------

def test_truncate_identity_at_alpha_two():
    xi = np.array([0.1, 5.0, 1e6])
    np.testing.assert_array_equal(truncate_xi(xi, 2.0, 7.0), xi)


def test_truncate_formula_value():
    assert truncate_xi(np.array([4.0]), 1.0, 1.0)[0] == pytest.approx(2.0)


def test_regularize_formula_value():
    assert regularize_xi(np.array([1e4]), 2.0, 0.01)[0] == pytest.approx(1000.0)


def test_truncation_chain_and_monotonicity():
    rng = np.random.default_rng(25)
    xi = np.exp(rng.uniform(-6, 12, 2000))
    for alpha in (1.0, 1.3, 1.7, 2.0):
        xa = truncate_xi(xi, alpha, 5.0)
        assert np.all(xa <= xi + 1e-12)
        prev = None
        for nu in (1.0, 0.5, 0.1, 0.01):
            xr = regularize_xi(xa, alpha, nu)
            assert np.all(xr <= xa + 1e-12)
            if prev is not None:
                assert np.all(xr >= prev - 1e-12)  # increases as nu decreases
            prev = xr
    # monotone nondecreasing in xi
    xi_sorted = np.sort(xi)
    assert np.all(np.diff(truncate_xi(xi_sorted, 1.5, 3.0)) >= -1e-12)
    assert np.all(np.diff(regularize_xi(xi_sorted, 1.5, 0.2)) >= -1e-12)


# ---------------------------------------------------------------------------
# conductivity
# ---------------------------------------------------------------------------

def test_conductivity_identity_and_scaling():
    th = np.array([0.7])
    K_id = cst.conductivity(MAT, ID, th)[0]
    k = MAT.kappa0 * (1.0 + MAT.eta_K * 0.7 / 1.7)
    np.testing.assert_allclose(K_id, k * np.eye(2), rtol=1e-14)
    # scaling invariance in 2D: F = c Id gives the same pullback
    for c in (0.3, 2.5):
        Kc = cst.conductivity(MAT, c * ID, th)[0]
        np.testing.assert_allclose(Kc, K_id, rtol=1e-13)


def test_conductivity_diag_pullback():
    mat = MaterialModel(eta_K=0.0)
    K = cst.conductivity(mat, np.diag([2.0, 1.0])[None], np.array([1.0]))[0]
    np.testing.assert_allclose(K, np.diag([0.5, 2.0]), rtol=1e-14)


def test_conductivity_spd():
    F = sample_F(100, seed=26)
    K = cst.conductivity(MAT, F, np.ones(F.shape[0]))
    np.testing.assert_allclose(K, np.swapaxes(K, -1, -2), rtol=1e-12)
    eig = np.linalg.eigvalsh(K)
    assert np.min(eig) > 0.0


# ---------------------------------------------------------------------------
# phi_beta
# ---------------------------------------------------------------------------

def test_phi_beta_values():
    assert phi_beta(-2.0, 1.0) == 0.0
    assert phi_beta(1.0, 1.0) == pytest.approx(2.0 ** 0.25 - 1.0, rel=1e-14)


def test_phi_beta_inequalities_grid():
    s = np.linspace(-2.0, 2.0, 201)
    for beta in 2.0 ** (-np.arange(11, dtype=float)):
        phi = phi_beta(s, beta)
        d1 = phi_beta_d1(s, beta)
        d2 = phi_beta_d2(s, beta)
        assert np.all(phi <= d1 * s + 1e-12)
        assert np.all(d1 * s <= 4.0 * phi + 1e-12)
        assert np.all(d2 * s <= 3.0 * d1 + 1e-12)
        assert np.all(phi <= np.maximum(s, 0.0) + 1e-15)


def test_phi_beta_monotone_family_and_limits():
    s = np.linspace(-2.0, 2.0, 101)
    betas = 2.0 ** (-np.arange(11, dtype=float))
    prev_phi = prev_d1 = None
    for b in betas:
        phi = phi_beta(s, b)
        d1 = phi_beta_d1(s, b)
        if prev_phi is not None:
            assert np.all(phi >= prev_phi - 1e-15)
            assert np.all(d1 >= prev_d1 - 1e-15)
        prev_phi, prev_d1 = phi, d1
    # pointwise limits: positive part and the step indicator
    np.testing.assert_allclose(prev_phi, np.maximum(s, 0.0), atol=2.0 ** -10)
    inner = s > 0.05
    np.testing.assert_allclose(prev_d1[inner], 1.0, atol=1e-4)
    assert np.all(prev_d1[s <= 0.0] == 0.0)


def test_phi_beta_derivatives_consistent():
    s = np.linspace(-1.5, 2.0, 301)
    h = 1e-6
    for b in (1.0, 0.125):
        fd = (phi_beta(s + h, b) - phi_beta(s - h, b)) / (2 * h)
        keep = np.abs(s) > 1e-3
        np.testing.assert_allclose(phi_beta_d1(s, b)[keep], fd[keep],
                                   rtol=1e-6, atol=1e-8)
        fd2 = (phi_beta_d1(s + h, b) - phi_beta_d1(s - h, b)) / (2 * h)
        np.testing.assert_allclose(phi_beta_d2(s, b)[keep], fd2[keep],
                                   rtol=1e-5, atol=1e-7)


# ---------------------------------------------------------------------------
# linearized tensors
# ---------------------------------------------------------------------------

def test_linearized_alpha_cases():
    mat = MaterialModel(beta0=0.2, alpha=1.5)
    lt = linearized_tensors(mat, alpha=1.5)
    assert np.all(lt.B_alpha == 0.0) and np.all(lt.CD_alpha == 0.0)
    lt1 = linearized_tensors(mat, alpha=1.0)
    np.testing.assert_array_equal(lt1.B_alpha, lt1.Bhat)
    lt2 = linearized_tensors(mat, alpha=2.0)
    np.testing.assert_array_equal(lt2.CD_alpha, lt2.CD)


def test_linearized_viscosity_form():
    mat = MaterialModel(eta_D=0.0)
    lt = linearized_tensors(mat)
    rng = np.random.default_rng(27)
    for _ in range(10):
        A = rng.normal(size=(2, 2))
        e = 0.5 * (A + A.T)
        val = np.einsum("ijkl,kl,ij->", lt.CD, A, A)
        assert val == pytest.approx(4.0 * np.sum(e * e), rel=1e-12)


def test_linearized_bhat_symmetric_and_value():
    mat = MaterialModel(beta0=0.4)
    lt = linearized_tensors(mat)
    np.testing.assert_allclose(lt.Bhat, lt.Bhat.T, atol=1e-15)
    np.testing.assert_allclose(lt.Bhat, 2.0 * 0.4 * mat.bump_amplitude * np.eye(2),
                               rtol=1e-13)


def test_linearized_positive_definiteness():
    lt = linearized_tensors(MAT)
    rng = np.random.default_rng(28)
    for _ in range(50):
        A = rng.normal(size=(2, 2))
        e2 = np.sum((0.5 * (A + A.T)) ** 2)
        cw = np.einsum("ijkl,kl,ij->", lt.CW, A, A)
        cd = np.einsum("ijkl,kl,ij->", lt.CD, A, A)
        assert cw >= 7.9 * e2 - 1e-10
        assert cd >= 3.9 * e2 - 1e-10


def test_linearized_heat_capacity():
    assert linearized_tensors(MAT).cV_bar == pytest.approx(MAT.C1)


def test_linearized_rejects_bad_alpha():
    with pytest.raises(ValueError, match=r"\[1, 2\]"):
        linearized_tensors(MAT, alpha=0.5)
    with pytest.raises(ValueError, match=r"\[1, 2\]"):
        linearized_tensors(MAT, alpha=2.5)


# ---------------------------------------------------------------------------
# frame indifference invariant (200 samples across all densities)
# ---------------------------------------------------------------------------

def test_frame_indifference_invariant():
    rng = np.random.default_rng(29)
    F = sample_F(200, seed=30, det_lo=0.1, det_hi=8.0)
    n = F.shape[0]
    th = np.exp(rng.uniform(np.log(1e-3), np.log(50.0), n))
    Q = random_rotation(rng, n)
    QF = np.einsum("nij,njk->nik", Q, F)
    for fn in (lambda m, a, b: free_energy(m, a, b),
               lambda m, a, b: internal_energy(m, a, b)):
        v = fn(MAT, F, th)
        vq = fn(MAT, QF, th)
        assert np.max(np.abs(vq - v) / (1.0 + np.abs(v))) <= 1e-10


# ---------------------------------------------------------------------------
# material validation / certification
# ---------------------------------------------------------------------------

def test_validate_default_material_passes():
    rep = validate_material(MAT, sample_budget=2000, seed=0)
    assert rep.passed, rep.render()


def test_validate_coupled_material_passes():
    rep = validate_material(MaterialModel(beta0=0.1, alpha=1.0),
                            sample_budget=2000, seed=1)
    assert rep.passed, rep.render()


def test_validate_low_C1_fails_on_heat_capacity():
    rep = validate_material(MaterialModel(C1=0.05), sample_budget=1500, seed=2)
    assert not rep.passed
    failing = [c.name for c in rep.checks if not c.passed]
    assert "heat_capacity_window" in failing


def test_validate_beta0_zero_certifies_zero_coupling():
    rep = validate_material(MAT, sample_budget=1000, seed=3)
    c8 = [c for c in rep.checks if c.name == "adiabatic_coupling_at_critical"][0]
    assert "identically 0" in c8.value


def test_validate_rejects_tiny_budget():
    with pytest.raises(ValueError):
        validate_material(MAT, sample_budget=10)


def test_material_constructor_invariants():
    with pytest.raises(ValueError, match="alpha"):
        MaterialModel(alpha=2.5)
    with pytest.raises(ValueError, match="q must be"):
        MaterialModel(p=4, q=3)
    with pytest.raises(ValueError, match="p must be"):
        MaterialModel(p=3)
    with pytest.raises(ValueError, match="eta_K"):
        MaterialModel(eta_K=0.7)


# ---------------------------------------------------------------------------
# temperature weights (ramp and bump): endpoint values and FD consistency
# ---------------------------------------------------------------------------

def test_ramp_and_bump_properties():
    th = np.linspace(0.0, 3.0, 1201)
    a, a1, a2, a3 = cst._a_ramp(th, 1.0)
    assert a[0] == 0.0 and a[th == 1.0][0] == 1.0
    assert np.all((a >= 0.0) & (a <= 1.0))
    h, h1, h2, h3 = cst._h_bump(np.array([1.0, 0.4, 1.7]), 1.0)
    assert h[0] == 0.0 and h1[0] == 1.0   # h(theta_c) = 0, h'(theta_c) = 1
    assert h[1] == 0.0 and h[2] == 0.0    # support [theta_c/2, 3 theta_c/2]
    # FD consistency of the derivative stacks
    hstep = 1e-6
    for fn in (lambda t: cst._a_ramp(t, 1.0), lambda t: cst._h_bump(t, 1.0)):
        v, d1v, d2v, d3v = fn(th)
        vp = fn(th + hstep)
        vm = fn(th - hstep)
        np.testing.assert_allclose((vp[0] - vm[0]) / (2 * hstep), d1v,
                                   atol=1e-5, rtol=1e-5)
        np.testing.assert_allclose((vp[1] - vm[1]) / (2 * hstep), d2v,
                                   atol=1e-4, rtol=1e-4)
        np.testing.assert_allclose((vp[2] - vm[2]) / (2 * hstep), d3v,
                                   atol=1e-3, rtol=1e-3)
