"""Shared manufactured-solution patch tests (unit suite and acceptance gate)."""

import numpy as np

from thermovisc.constitutive import MaterialModel, linearized_tensors
from thermovisc.grid import Grid2
from thermovisc.linear_sim import linear_heat_step, run_linear
from thermovisc.nonlinear_sim import SimConfig


def mech_patch_error(n, n_steps=4, T=0.05):
    """L2 error of the implicit mechanical solve against u = (1+t) uhat.

    uhat = (x1^3, x1^2 x2) vanishes on the clamped edge and is not contained
    in the Q1 space; the loads are shifted by tau/2 so the solver's midpoint
    sampling reproduces the exact f(t_k), making implicit Euler exact in time
    for this linear-in-t solution (the spatial error is pure Galerkin O(h^2)).
    """
    mat = MaterialModel(beta0=0.0)
    lt = linearized_tensors(mat, alpha=2.0)
    grid = Grid2(n, n)
    tau = T / n_steps
    cd = 4.0 * (1.0 + mat.eta_D / (1.0 + mat.theta_c))

    def uhat(x):
        return np.column_stack([x[:, 0] ** 3, x[:, 0] ** 2 * x[:, 1]])

    # e(uhat) = [[3 x1^2, x1 x2], [x1 x2, x1^2]], div e = (7 x1, x2)
    def f(t, x):
        te = t + tau / 2.0
        coef = 8.0 * (1.0 + te) + cd
        return -coef * np.column_stack([7.0 * x[:, 0], x[:, 1]])

    def gN(t, x):
        te = t + tau / 2.0
        coef = 8.0 * (1.0 + te) + cd
        e11 = 3.0 * x[:, 0] ** 2
        e12 = x[:, 0] * x[:, 1]
        e22 = x[:, 0] ** 2
        out = np.zeros((x.shape[0], 2))
        right = x[:, 0] == 1.0
        bottom = x[:, 1] == 0.0
        top = x[:, 1] == 1.0
        out[right, 0] = coef * e11[right]
        out[right, 1] = coef * e12[right]
        out[bottom, 0] = -coef * e12[bottom]
        out[bottom, 1] = -coef * e22[bottom]
        out[top, 0] = coef * e12[top]
        out[top, 1] = coef * e22[top]
        return out

    cfg = SimConfig(dt=tau, T=T, alpha=2.0, nx=n, ny=n, f=f, g=gN,
                    u0=uhat, mu0=lambda x: np.zeros(x.shape[0]),
                    mu_flat=lambda t, x: np.zeros(x.shape[0]))
    traj = run_linear(cfg, lt, kappa=mat.kappa, grid=grid, theta_c=mat.theta_c)
    exact = (1.0 + T) * uhat(grid.nodes)
    return grid.l2_norm(traj.states[-1].u - exact)


def heat_patch_error(n):
    """L2 error of the steady Robin heat solve with a Bhat-driven source.

    u_rate = (x1, x2) gives the constant source s0 = theta_c Bhat : Id; the
    exact steady solution is mu = -s0 x1^2 / (2 k_c) with matching Robin
    data.  A few huge implicit steps converge to the discrete steady state.
    """
    mat = MaterialModel(beta0=0.25, alpha=1.5)
    lt = linearized_tensors(mat, alpha=1.5)
    grid = Grid2(n, n)
    kc = lt.K_c[0, 0]
    s0 = mat.theta_c * np.trace(lt.Bhat)
    kappa = mat.kappa

    def mu_exact(x):
        return -s0 * x[:, 0] ** 2 / (2.0 * kc)

    def flux(x):
        out = np.zeros(x.shape[0])
        out[x[:, 0] == 1.0] = -s0
        return out

    def mu_flat(x):
        return mu_exact(x) + flux(x) / kappa

    cfg = SimConfig(dt=1e8, T=3e8, alpha=1.5, nx=n, ny=n,
                    u0=lambda x: np.zeros((x.shape[0], 2)),
                    mu0=lambda x: np.zeros(x.shape[0]),
                    mu_flat=lambda t, x: mu_flat(x))
    u_rate = grid.nodes.copy()
    mu = np.zeros(grid.nnode)
    for k in range(3):
        mu = linear_heat_step(mu, u_rate, lt, cfg, grid=grid, kappa=kappa,
                              theta_c=mat.theta_c, t_k=(k + 1) * cfg.dt)
    return grid.l2_norm(mu - mu_exact(grid.nodes))
