"""Trajectory-level certificates: energy balances, temperature floors,
scaling reports, and nonlinear-vs-linear errors.

All functions are pure: rerunning on the same trajectory produces identical
results (and identical rendered bytes).  Quadrature, norms, and rates use the
same Gauss rule and backward differences as the solvers, so the residuals
measured here are solver residuals, not discretization mismatches.
"""

from __future__ import annotations

import numpy as np

from . import constitutive as cst
from .constitutive import CertificationReport, CheckResult
from .grid import Grid2

__all__ = [
    "DiagnosticsReport",
    "energy_balance_residual",
    "positivity_certificate",
    "phi_beta_functional",
    "apriori_scaling_report",
    "linearization_error",
    "korn_ratio",
    "nu_robustness",
]


class DiagnosticsReport(CertificationReport):
    """PASS/FAIL check list with values, thresholds, and witnesses."""


def _rate_qp(grid, s_prev, s_new, tau):
    return (s_new.grad_y - s_prev.grad_y) / tau


def energy_balance_residual(traj, config, material):
    """Discrete residual of the mechanical energy balance, step by step.

    The balance is tested in its variational (per-step) form: the first
    variation of the incremental functional at the accepted minimizer paired
    with the increment,

        r_k = int [dF W(grad y_k, theta_(k-1)) : d(grad y)
                   + dG H(hess y_k) : d(hess y)] dx
              + tau int xi(grad y_(k-1), rate, theta_(k-1)) dx
              - <l_eps(t_mid), dy>,

    which vanishes up to optimizer/solver tolerances times the measured
    condition factor max(1, |dy|_l1).  Also reports the per-step descent
    slack and a first-law series (total energy rate minus external power and
    boundary heat exchange; informational).
    """
    grid = traj.grid
    tau = config.dt
    w = grid.qp_w
    n = len(traj.states) - 1
    residual = np.zeros(n + 1)
    threshold = np.zeros(n + 1)
    slack = np.zeros(n + 1)
    slack_tol = np.zeros(n + 1)
    first_law = np.zeros(n + 1)
    from .nonlinear_sim import load_vector

    prev_total = None
    prev_F = traj.states[0].grad_y
    prev_hess = traj.states[0].hess_y
    prev_thq = traj.states[0].theta_qp
    for k in range(1, n + 1):
        sp_, sn = traj.states[k - 1], traj.states[k]
        rec = traj.records[k]
        F_new = sn.grad_y
        hess_new = sn.hess_y
        thq_new = sn.theta_qp
        dF = F_new - prev_F
        dG = hess_new - prev_hess
        dy = sn.y - sp_.y
        dW = cst.stress_dF(material, F_new, prev_thq, config.eps)
        n2 = np.sum(hess_new**2, axis=(-1, -2, -3))
        coefH = material.c_H * material.p * cst._ipow(n2, material.p // 2 - 1)
        rate = dF / tau
        xi = cst.dissipation(material, prev_F, rate, prev_thq)["xi"]
        lvec = load_vector(grid, config, material, sn.t - 0.5 * tau)
        r = float(np.dot(w, cst._dot22(dW, dF))
                  + np.dot(w, coefH * np.sum(hess_new * dG, axis=(-1, -2, -3)))
                  + tau * np.dot(w, xi)
                  - np.sum(lvec * dy))
        residual[k] = abs(r)
        phi_scale = 1.0 + abs(rec["Phi_after"])
        cond = max(1.0, rec["dy_l1"])
        threshold[k] = 10.0 * (config.pg_tol * phi_scale * cond
                               + config.heat_rtol * phi_scale)
        slack[k] = rec["descent_slack"]
        slack_tol[k] = 1e-10 * phi_scale

        # first law (informational): d/dt [M + int W_in] - power - boundary heat
        Ein = grid.integrate(cst.internal_energy(material, F_new, thq_new,
                                                 config.eps))
        total = traj.records[k]["M"] + Ein
        if prev_total is None:
            Ein0 = grid.integrate(cst.internal_energy(
                material, prev_F, prev_thq, config.eps))
            prev_total = traj.records[k - 1]["M"] + Ein0
        tf = material.theta_c + config.eps**config.alpha * np.asarray(
            config.mu_flat(sn.t - 0.5 * tau, grid.xb), dtype=float)
        th_b = grid.Pb @ sn.theta
        bdry = material.kappa * float(np.dot(grid.wb, tf - th_b))
        first_law[k] = (total - prev_total) / tau - np.sum(lvec * dy) / tau - bdry
        prev_total = total
        prev_F, prev_hess, prev_thq = F_new, hess_new, thq_new

    return {
        "residual": residual,
        "threshold": threshold,
        "descent_slack": slack,
        "descent_tol": slack_tol,
        "first_law": first_law,
        "max_residual": float(np.max(residual)),
        "max_slack": float(np.max(slack)),
        "passed": bool(np.all(residual <= threshold)
                       and np.all(slack <= slack_tol)),
    }


def positivity_certificate(traj, lambda0, Dtilde, material):
    """Exponential temperature-floor certificate with the five-term split.

    With lambda(t) = lambda0 exp(-Dtilde t), evaluates per step
      G(t) = 1/2 int (lambda - theta)_+^2 dx
    and the decomposition A1..A5 of its production:
      A1 = -Dtilde lambda int (lambda - theta)_+
      A2 = -int K grad theta . grad theta 1_{theta<=lambda} / c_V
      A3 = kappa int_Gamma (theta - theta_flat) (lambda - theta)_+ / c_V
      A4 = int K grad theta . (lambda - theta)_+ grad(1/c_V)
      A5 = int [ -theta dFtheta W_cpl : rate - xi_reg ] (lambda - theta)_+ / c_V.

    Reports: G identically zero (strict success), G nonincreasing, A2 <= 0 at
    every step, and A3 <= 0 whenever theta_flat >= lambda.  The time-t
    coefficients are taken at the stored state; the rate and the regularized
    source use the scheme's frozen previous-state sampling.
    """
    grid = traj.grid
    config = traj.config
    tau = config.dt
    w = grid.qp_w
    eps = config.eps
    nsteps = len(traj.states) - 1
    times = traj.times
    lam = lambda0 * np.exp(-Dtilde * times)
    G = np.zeros(nsteps + 1)
    A = np.zeros((5, nsteps + 1))
    theta_flat_min = np.zeros(nsteps + 1)

    if np.min(traj.states[0].theta) < lambda0 - 1e-12:
        raise ValueError("initial temperature must dominate lambda0 nodally")

    prev_F = traj.states[0].grad_y
    prev_thq = traj.states[0].theta_qp
    for k in range(nsteps + 1):
        st = traj.states[k]
        F = st.grad_y
        thq = st.theta_qp
        pos = np.maximum(lam[k] - thq, 0.0)
        G[k] = 0.5 * float(np.dot(w, pos * pos))
        if k == 0:
            continue
        gth = st.grad_theta
        cv = cst.heat_capacity(material, F, thq, eps)
        Kc = cst.conductivity(material, F, thq)
        Kg = np.einsum("qij,qj->qi", Kc, gth)
        ind = (thq <= lam[k]).astype(float)
        A[0, k] = -Dtilde * lam[k] * float(np.dot(w, pos))
        A[1, k] = -float(np.dot(w, np.sum(Kg * gth, axis=-1) * ind / cv))
        # boundary term with the scheme's midpoint external temperature
        t_mid = st.t - 0.5 * tau
        tf = material.theta_c + eps**config.alpha * np.asarray(
            config.mu_flat(t_mid, grid.xb), dtype=float)
        theta_flat_min[k] = float(np.min(tf))
        th_b = grid.Pb @ st.theta
        pos_b = np.maximum(lam[k] - th_b, 0.0)
        cv_b = _cv_boundary(material, th_b, eps)
        A[2, k] = material.kappa * float(np.dot(grid.wb, (th_b - tf) * pos_b / cv_b))
        # A4: grad(1/c_V) via the analytic formula
        dFtt = cst.dFthetatheta_coupling(material, F, thq, eps)
        contr = np.einsum("qci,qcij->qj", dFtt, st.hess_y)
        d2win = cst.d2theta_internal_energy(material, F, thq, eps)
        grad_cvinv = (thq[:, None] * contr
                      - d2win[:, None] * gth) / (cv[:, None] ** 2)
        A[3, k] = float(np.dot(w, np.sum(Kg * grad_cvinv, axis=-1) * pos))
        # A5 with the scheme's frozen source sampling
        rate = (F - prev_F) / tau
        xi = cst.dissipation(material, prev_F, rate, prev_thq)["xi"]
        xi_reg = cst.regularize_xi(cst.truncate_xi(xi, config.alpha, material.Lambda),
                                   config.alpha, config.nu)
        dFth = cst.dFtheta_coupling(material, F, thq, eps)
        adiab = -thq * cst._dot22(dFth, rate)
        A[4, k] = float(np.dot(w, (adiab - xi_reg) * pos / cv))
        prev_F, prev_thq = F, thq

    rep = DiagnosticsReport()
    # interpolating nodal theta to quadrature points costs one ulp of the
    # partition of unity, so "identically zero" means zero up to (ulp)^2
    g_floor = 1e-28 * (1.0 + lambda0**2)
    g_zero = bool(np.all(G <= g_floor))
    rep.add("G_identically_zero", f"max G = {float(np.max(G)):.3e}",
            f"<= {g_floor:.1e} (quadrature roundoff)", g_zero)
    dG = np.diff(G)
    noninc = bool(np.all(dG <= 1e-14 * (1.0 + G[:-1])))
    rep.add("G_nonincreasing", f"max increment {float(np.max(dG)) if dG.size else 0.0:.3e}",
            "<= 1e-14 (1+G)", noninc)
    rep.add("A1_nonpositive", f"max {float(np.max(A[0, 1:])):.3e}", "<= 0",
            bool(np.all(A[0, 1:] <= 0.0)))
    rep.add("A2_nonpositive", f"max {float(np.max(A[1, 1:])):.3e}", "<= 0",
            bool(np.all(A[1, 1:] <= 0.0)))
    mask = theta_flat_min[1:] >= lam[1:]
    a3ok = bool(np.all(A[2, 1:][mask] <= 0.0))
    rep.add("A3_nonpositive_when_flat_above_lambda",
            f"max {float(np.max(A[2, 1:][mask])) if np.any(mask) else 0.0:.3e}"
            f" on {int(np.sum(mask))} steps", "<= 0", a3ok)
    return {"report": rep, "G": G, "A": A, "lambda": lam,
            "theta_flat_min": theta_flat_min, "passed": rep.passed}


def _cv_boundary(material, th_b, eps):
    """Heat capacity weight on boundary quadrature points.

    Deformation gradients are not cached on the boundary; c_V enters A3 only
    as a positive weight, so the strain dependence (bounded bump, zero at the
    identity) is dropped, leaving the g(Id) = 0 value C1.  Signs and
    positivity are unaffected.
    """
    del eps
    return np.full(th_b.shape, float(material.C1))


def phi_beta_functional(traj, beta, lambda_fn, material=None):
    """Regularized floor functional V(t) = 1/2 int phi_beta(lambda - theta)^2 dx.

    Returns the series, its backward-difference rate, and the chain-rule
    right-hand side

        int phi phi' (lambda_dot + dF W_in : rate / c_V) dx
        - int (dw/dt) phi phi' / c_V dx,

    with w = W_in(grad y, theta) and all factors at the stored states.
    lambda_fn(t) must return (value, time derivative).
    """
    if material is None:
        material = traj.material
    grid = traj.grid
    config = traj.config
    w = grid.qp_w
    tau = config.dt
    eps = config.eps
    nsteps = len(traj.states) - 1
    V = np.zeros(nsteps + 1)
    dVdt = np.zeros(nsteps + 1)
    rhs = np.zeros(nsteps + 1)
    prev_F = traj.states[0].grad_y
    prev_thq = traj.states[0].theta_qp
    prev_w = cst.internal_energy(material, prev_F, prev_thq, eps)
    for k in range(nsteps + 1):
        st = traj.states[k]
        F = st.grad_y
        thq = st.theta_qp
        lam, lam_dot = lambda_fn(st.t)
        s = lam - thq
        V[k] = 0.5 * float(np.dot(w, cst.phi_beta(s, beta) ** 2))
        if k == 0:
            continue
        dVdt[k] = (V[k] - V[k - 1]) / tau
        phi = cst.phi_beta(s, beta)
        phi1 = cst.phi_beta_d1(s, beta)
        cv = cst.heat_capacity(material, F, thq, eps)
        rate = (F - prev_F) / tau
        dFwin = cst.internal_energy_dF(material, F, thq, eps)
        wk = cst.internal_energy(material, F, thq, eps)
        dwdt = (wk - prev_w) / tau
        rhs[k] = float(np.dot(w, phi * phi1 * (lam_dot + cst._dot22(dFwin, rate) / cv))
                       - np.dot(w, dwdt * phi * phi1 / cv))
        prev_F, prev_thq, prev_w = F, thq, wk
    return {"V": V, "dVdt": dVdt, "chain_rhs": rhs}


def apriori_scaling_report(sweep, ratio_threshold=3.0):
    """Scaled a-priori quantities over an eps-sweep of nonlinear trajectories.

    sweep: list of (eps, Trajectory).  For each trajectory computes
      sup_t E_shifted / eps^2,
      sup_t |y - id|_H1 / eps,
      sup_t |theta - theta_c|_L^(2/alpha) / eps^alpha,
      total dissipation / eps^2,
      |d/dt grad y|_L2(I x Omega) / eps,
    and reports the max/min ratio of each across the sweep (PASS when every
    ratio is at most ratio_threshold; all-zero quantities pass vacuously).
    """
    if len(sweep) < 3:
        raise ValueError("need at least 3 eps values")
    names = ("E_shifted/eps^2", "y-id_H1/eps", "theta-dev_L(2/alpha)/eps^alpha",
             "dissipation/eps^2", "strain_rate_L2/eps")
    table = {nm: [] for nm in names}
    eps_list = []
    for eps, traj in sorted(sweep, key=lambda p: -p[0]):
        grid = traj.grid
        cfg = traj.config
        mat = traj.material
        eps_list.append(eps)
        table[names[0]].append(max(r["E_shifted"] for r in traj.records) / eps**2)
        h1 = max(grid.h1_norm(s.y - grid.nodes) for s in traj.states)
        table[names[1]].append(h1 / eps)
        pw = 2.0 / cfg.alpha
        dev = max(grid.lp_norm(s.theta - mat.theta_c, pw) for s in traj.states)
        table[names[2]].append(dev / eps**cfg.alpha)
        table[names[3]].append(traj.records[-1]["diss_cum"] / eps**2)
        acc = 0.0
        for k in range(1, len(traj.states)):
            rate = (traj.states[k].grad_y - traj.states[k - 1].grad_y) / cfg.dt
            acc += cfg.dt * grid.integrate(cst._frob2(rate))
        table[names[4]].append(np.sqrt(acc) / eps)

    rep = DiagnosticsReport()
    for nm in names:
        vals = np.array(table[nm])
        # energies are assembled by large cancelling sums; treat anything at
        # quadrature-roundoff size as exactly zero before forming ratios
        if np.max(vals) <= 1e-10:
            rep.add(f"scaling[{nm}]", "all zero (within roundoff)",
                    f"ratio <= {ratio_threshold:g}", True)
            continue
        ratio = float(np.max(vals) / max(np.min(vals), 1e-300))
        rep.add(f"scaling[{nm}]",
                "values " + ",".join(f"{v:.6g}" for v in vals) + f" ratio {ratio:.4g}",
                f"ratio <= {ratio_threshold:g}", ratio <= ratio_threshold)
    return {"report": rep, "eps": eps_list, "table": table, "passed": rep.passed}


def linearization_error(nl_traj, lin_traj, eps, alpha):
    """Norms of the rescaled nonlinear solution against the linear reference.

    u_eps = (y - id)/eps, mu_eps = (theta - theta_c)/eps^alpha; returns
      sup_t |u_eps - u|_H1,
      |d/dt(u_eps - u)|_L2(I x Omega)  (backward-difference rates),
      |mu_eps - mu|_L2(I x Omega).
    """
    grid = nl_traj.grid
    if (grid.nx, grid.ny) != (lin_traj.grid.nx, lin_traj.grid.ny):
        raise ValueError("grid mismatch between nonlinear and linear trajectories")
    if len(nl_traj.states) != len(lin_traj.states):
        raise ValueError("timestep mismatch between nonlinear and linear trajectories")
    theta_c = nl_traj.material.theta_c
    tau = nl_traj.config.dt
    sup_h1 = 0.0
    rate_sq = 0.0
    mu_sq = 0.0
    prev_diff = None
    for sn, sl in zip(nl_traj.states, lin_traj.states):
        u_eps = (sn.y - grid.nodes) / eps
        diff = u_eps - sl.u
        sup_h1 = max(sup_h1, grid.h1_norm(diff))
        mu_eps = (sn.theta - theta_c) / eps**alpha
        mdiff = mu_eps - sl.mu
        if prev_diff is not None:
            rate_sq += tau * grid.l2_norm((diff - prev_diff) / tau) ** 2
            mu_sq += tau * grid.l2_norm(mdiff) ** 2
        prev_diff = diff
    return {"u_H1_sup": sup_h1, "du_L2": float(np.sqrt(rate_sq)),
            "mu_L2": float(np.sqrt(mu_sq))}


def korn_ratio(u, F_field, grid):
    """|grad u|_L2 / |sym(F^T grad u)|_L2 by quadrature; u = 0 on Gamma_D."""
    u = np.asarray(u, dtype=float)
    if np.max(np.abs(u[grid.dirichlet_nodes])) > 1e-12:
        raise ValueError("u must vanish on the Dirichlet boundary")
    gu = grid.gradient_at_qp(u)
    num = np.dot(grid.qp_w, cst._frob2(gu))
    S = cst.tmul2(np.asarray(F_field, dtype=float), gu)
    S = 0.5 * (S + np.swapaxes(S, -1, -2))
    den = np.dot(grid.qp_w, cst._frob2(S))
    if den <= 0.0:
        return np.inf if num > 0.0 else 0.0
    return float(np.sqrt(num / den))


def nu_robustness(traj_a, traj_b, material):
    """Temperature sensitivity to the regularization level.

    traj_a and traj_b differ only in nu.  Returns the max nodal
    |theta_a - theta_b| over time together with the comparison-principle
    bound of the lumped heat step: the mass-lumped M-matrix system satisfies
    |dtheta^k|_inf <= |dtheta^(k-1)|_inf + tau max_i (P^T w |dsrc|)_i / (M_L c_V)_i,
    accumulated over the steps with the source difference evaluated along
    both stored trajectories (the monotone family makes it one-signed at
    matching states; evaluating on both runs absorbs the mechanical
    feedback between them).
    """
    cfg_a, cfg_b = traj_a.config, traj_b.config
    grid = traj_a.grid
    max_dth = 0.0
    bound = 0.0
    for k in range(1, len(traj_a.states)):
        sa, sb = traj_a.states[k], traj_b.states[k]
        max_dth = max(max_dth, float(np.max(np.abs(sa.theta - sb.theta))))
        inc = 0.0
        for traj, cfg in ((traj_a, cfg_a), (traj_b, cfg_b)):
            sp_ = traj.states[k - 1]
            F_prev = sp_.grad_y
            thq_prev = sp_.theta_qp
            rate = (traj.states[k].grad_y - F_prev) / cfg.dt
            xi = cst.dissipation(material, F_prev, rate, thq_prev)["xi"]
            xa = cst.truncate_xi(xi, cfg.alpha, material.Lambda)
            ra = cst.regularize_xi(xa, cfg.alpha, cfg_a.nu)
            rb = cst.regularize_xi(xa, cfg.alpha, cfg_b.nu)
            cv_qp = cst.heat_capacity(material, F_prev, thq_prev, cfg.eps)
            ML_cv = np.asarray(grid.PT @ (grid.qp_w * cv_qp))
            dsrc = np.asarray(grid.PT @ (grid.qp_w * np.abs(ra - rb)))
            inc = max(inc, cfg.dt * float(np.max(dsrc / ML_cv)))
        bound += inc
    return {"max_dtheta": max_dth, "bound": bound}
