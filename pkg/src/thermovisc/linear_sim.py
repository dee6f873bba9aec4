"""Implicit-Euler solver for the linearized thermoviscoelastic system.

Unknowns are the rescaled displacement u (zero on Gamma_D) and the rescaled
temperature deviation mu (sign-indefinite).  The equations are

    -div( CW e(u) + CD e(du/dt) + B_alpha mu ) = f,        + Neumann data g,
    cV_bar dmu/dt - div( K_c grad mu )
        = CD_alpha e(du/dt) : e(du/dt) + theta_c Bhat : e(du/dt),
    K_c grad mu . n + kappa mu = kappa mu_flat  on Gamma,

with the constant tensors of :func:`constitutive.linearized_tensors`.  The
same grid, quadrature, and mass lumping as the nonlinear solver are used so
that linearization errors are not polluted by discretization mismatch.

Stepping is staggered (mechanical first by default); for alpha = 1 the pair
is Picard-iterated to a fixed point each step because B_alpha couples both
directions.  Loads are sampled at step midpoints, matching the nonlinear
solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import Grid2
from .nonlinear_sim import SolverError

__all__ = [
    "LinearState",
    "LinearTrajectory",
    "LinearSolver",
    "LinearSolveError",
    "linear_mech_step",
    "linear_heat_step",
    "run_linear",
    "LIN_CSV_COLUMNS",
]


class LinearSolveError(SolverError):
    pass


@dataclass
class LinearState:
    u: np.ndarray    # (nnode, 2), zero on Gamma_D
    mu: np.ndarray   # (nnode,), may be negative
    t: float


LIN_CSV_COLUMNS = ("t", "E0", "diss_cum", "mu_min", "mu_max")


@dataclass
class LinearTrajectory:
    states: list
    records: list
    config: object
    tensors: object
    grid: Grid2

    @property
    def times(self):
        return np.array([s.t for s in self.states])

    def to_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write(",".join(LIN_CSV_COLUMNS) + "\n")
            for r in self.records:
                fh.write(",".join(f"{r[c]:.17g}" for c in LIN_CSV_COLUMNS) + "\n")


def _elastic_block_matrix(grid, T4):
    """Assemble int T4[grad z, grad v] dx for a constant 4-tensor (2,2,2,2)."""
    dN = grid.shape_grads_qp                       # (4qp, 4node, 2)
    wq = grid.qp_w.reshape(grid.ncell, 4)[0]       # identical cells
    block = np.einsum("q,kilj,qai,qbj->akbl", wq, T4, dN, dN).reshape(8, 8)
    data = np.broadcast_to(block, (grid.ncell, 8, 8))
    dof = (2 * grid.cell_nodes[:, :, None] + np.arange(2)[None, None, :]).reshape(
        grid.ncell, 8)
    rows = np.broadcast_to(dof[:, :, None], data.shape).ravel()
    cols = np.broadcast_to(dof[:, None, :], data.shape).ravel()
    n = 2 * grid.nnode
    return sp.csr_matrix((data.ravel(), (rows, cols)), shape=(n, n))


class LinearSolver:
    """Constant matrices and step operators of the linearized system."""

    def __init__(self, grid, tensors, config, kappa, theta_c=1.0):
        self.grid = grid
        self.tensors = tensors
        self.config = config
        self.kappa = float(kappa)
        self.theta_c = float(theta_c)
        self.tau = config.dt
        self.A_W = _elastic_block_matrix(grid, tensors.CW)
        self.A_D = _elastic_block_matrix(grid, tensors.CD)
        self.free = np.where(grid.free_mask.ravel())[0]
        A = (self.A_W + self.A_D / self.tau).tocsr()
        self.A_mech_free = A[self.free][:, self.free].tocsr()
        self.mech_diag_inv = sp.diags(1.0 / self.A_mech_free.diagonal())
        # heat: lumped cV_bar mass, constant conduction, lumped Robin trace
        kcol = np.broadcast_to(tensors.K_c, (grid.nqp, 2, 2))
        self.K_heat = grid.stiffness(np.ascontiguousarray(kcol))
        self.ML_cv = tensors.cV_bar * grid.lumped_mass
        self.A_heat = (self.K_heat
                       + sp.diags(self.ML_cv / self.tau
                                  + self.kappa * grid.trace_lump)).tocsr()
        self.heat_diag_inv = sp.diags(1.0 / self.A_heat.diagonal())

    # -- helpers ---------------------------------------------------------

    def strain_qp(self, u):
        gu = self.grid.gradient_at_qp(u)
        return 0.5 * (gu + np.swapaxes(gu, -1, -2))

    def coupling_vector(self, mu):
        """Nodal vector of int mu B_alpha : grad z dx."""
        B = self.tensors.B_alpha
        if not np.any(B):
            return np.zeros(2 * self.grid.nnode)
        mu_qp = self.grid.P @ mu
        wmu = self.grid.qp_w * mu_qp
        out = np.empty((self.grid.nnode, 2))
        for c in range(2):
            out[:, c] = self.grid.GxT @ (wmu * B[c, 0]) + self.grid.GyT @ (wmu * B[c, 1])
        return out.ravel()

    def load_vector(self, t_mid):
        grid = self.grid
        cfg = self.config
        fq = np.asarray(cfg.f(t_mid, grid.qp_x), dtype=float)
        gq = np.asarray(cfg.g(t_mid, grid.xbN), dtype=float)
        out = np.empty((grid.nnode, 2))
        for c in range(2):
            out[:, c] = grid.PT @ (grid.qp_w * fq[:, c]) \
                + grid.PbNT @ (grid.wbN * gq[:, c])
        return out.ravel()

    def E0(self, u):
        uf = np.asarray(u, dtype=float).ravel()
        return 0.5 * float(uf @ (self.A_W @ uf))

    def viscous_rate_integral(self, rate):
        rf = np.asarray(rate, dtype=float).ravel()
        return float(rf @ (self.A_D @ rf))

    # -- steps -----------------------------------------------------------

    def mech_step(self, u_prev, mu_guess, t_k):
        """Solve (A_W + A_D/tau) u = l(t_mid) + A_D u_prev/tau - B(mu)."""
        t_mid = t_k - 0.5 * self.tau
        lvec = self.load_vector(t_mid)
        up = np.asarray(u_prev, dtype=float).ravel()
        rhs = lvec + (self.A_D @ up) / self.tau - self.coupling_vector(mu_guess)
        b = rhs[self.free]
        x0 = up[self.free]
        x, info = spla.cg(self.A_mech_free, b, x0=x0, rtol=1e-12, atol=0.0,
                          maxiter=20000, M=self.mech_diag_inv)
        if info != 0:
            raise LinearSolveError(f"linear mechanical CG failed (info={info})")
        u = np.zeros(2 * self.grid.nnode)
        u[self.free] = x
        return u.reshape(self.grid.nnode, 2), lvec

    def heat_sources_qp(self, u_rate):
        """CD_alpha e(rate):e(rate) + theta_c_Bhat : e(rate) at quadrature points."""
        e = self.strain_qp(u_rate)
        src = np.zeros(self.grid.nqp)
        CDa = self.tensors.CD_alpha
        if np.any(CDa):
            src += np.einsum("ijkl,qkl,qij->q", CDa, e, e)
        Bh = self.tensors.Bhat
        if np.any(Bh):
            theta_c_Bhat = self._theta_c_Bhat
            src += (theta_c_Bhat[0, 0] * e[:, 0, 0] + theta_c_Bhat[1, 1] * e[:, 1, 1]
                    + 2.0 * theta_c_Bhat[0, 1] * e[:, 0, 1])
        return src

    def heat_step(self, mu_prev, u_rate, t_k):
        """Implicit heat solve with constant coefficients and lumped Robin."""
        grid = self.grid
        t_mid = t_k - 0.5 * self.tau
        src = self.heat_sources_qp(u_rate)
        mu_b = np.asarray(self.config.mu_flat(t_mid, grid.xb), dtype=float)
        b = (self.ML_cv * np.asarray(mu_prev, dtype=float) / self.tau
             + np.asarray(grid.PT @ (grid.qp_w * src))
             + self.kappa * np.asarray(grid.PbT @ (grid.wb * mu_b)))
        x, info = spla.cg(self.A_heat, b, x0=np.asarray(mu_prev, dtype=float),
                          rtol=1e-12, atol=0.0, maxiter=20000, M=self.heat_diag_inv)
        if info != 0:
            raise LinearSolveError(f"linear heat CG failed (info={info})")
        return x

    @property
    def _theta_c_Bhat(self):
        return self.theta_c * self.tensors.Bhat

    def identity_residual(self, u_new, u_prev, mu_used, lvec):
        """Variational energy-identity residual, tested with the increment.

        r = (A_W u + A_D rate + B mu - l) . (u - u_prev); exact stationarity
        of the discrete mechanical equation makes r a pure solver residual.
        Normalized by 1 + |E0| + tau * viscous power.
        """
        un = u_new.ravel()
        up = u_prev.ravel()
        du = un - up
        rate = du / self.tau
        resvec = self.A_W @ un + self.A_D @ rate + self.coupling_vector(mu_used) \
            - lvec
        r = float(resvec[self.free] @ du[self.free])
        scale = 1.0 + abs(self.E0(u_new)) + self.tau * self.viscous_rate_integral(rate)
        return abs(r) / scale


def run_linear(config, tensors, kappa=1.0, grid=None, order="mech_first",
               heat_enabled=True, theta_c=1.0, picard_max=10, picard_tol=1e-10):
    """Staggered implicit stepping of the linearized system.

    For alpha = 1 each step Picard-iterates the (u, mu) pair to a fixed point
    (<= picard_max sweeps, relative update below picard_tol, else a hard
    error).  `order` selects mech-first or heat-first staggering; with
    heat-first the heat step uses the previous strain rate.  Disabling the
    heat solver freezes mu (only meaningful when B_alpha = 0).
    """
    if grid is None:
        grid = Grid2(config.nx, config.ny)
    solver = LinearSolver(grid, tensors, config, kappa, theta_c)
    tau = config.dt
    u = np.asarray(config.u0(grid.nodes), dtype=float).copy()
    u[grid.dirichlet_nodes] = 0.0
    mu = np.asarray(config.mu0(grid.nodes), dtype=float).copy()
    states = [LinearState(u=u.copy(), mu=mu.copy(), t=0.0)]
    records = [{"t": 0.0, "E0": solver.E0(u), "diss_cum": 0.0,
                "mu_min": float(np.min(mu)), "mu_max": float(np.max(mu)),
                "identity_res": 0.0, "picard_iters": 0}]
    diss_cum = 0.0
    prev_rate = np.zeros_like(u)
    coupled = bool(np.any(tensors.B_alpha)) and heat_enabled
    n = config.n_steps
    for k in range(1, n + 1):
        t_k = k * tau
        if coupled:
            mu_it = mu
            u_new = u
            for sweep in range(1, picard_max + 1):
                u_cand, lvec = solver.mech_step(u, mu_it, t_k)
                rate = (u_cand - u) / tau
                mu_cand = solver.heat_step(mu, rate, t_k)
                du = np.max(np.abs(u_cand - u_new)) if sweep > 1 else np.inf
                dmu = np.max(np.abs(mu_cand - mu_it)) if sweep > 1 else np.inf
                u_new, mu_it = u_cand, mu_cand
                scale = 1.0 + max(np.max(np.abs(u_new)), np.max(np.abs(mu_it)))
                if sweep > 1 and max(du, dmu) <= picard_tol * scale:
                    break
            else:
                raise LinearSolveError(
                    f"step {k}: Picard iteration did not converge "
                    f"in {picard_max} sweeps")
            mu_new = mu_it
            picard = sweep
        elif order == "mech_first":
            u_new, lvec = solver.mech_step(u, mu, t_k)
            rate = (u_new - u) / tau
            mu_new = solver.heat_step(mu, rate, t_k) if heat_enabled else mu.copy()
            picard = 1
        elif order == "heat_first":
            mu_new = solver.heat_step(mu, prev_rate, t_k) if heat_enabled else mu.copy()
            u_new, lvec = solver.mech_step(u, mu_new, t_k)
            rate = (u_new - u) / tau
            picard = 1
        else:
            raise ValueError(f"unknown staggering order: {order}")
        diss_inc = tau * solver.viscous_rate_integral(rate)
        diss_cum += diss_inc
        res = solver.identity_residual(u_new, u, mu_new if coupled else mu, lvec)
        records.append({"t": t_k, "E0": solver.E0(u_new), "diss_cum": diss_cum,
                        "mu_min": float(np.min(mu_new)),
                        "mu_max": float(np.max(mu_new)),
                        "identity_res": res, "picard_iters": picard})
        u, mu = u_new, mu_new
        prev_rate = rate
        states.append(LinearState(u=u.copy(), mu=mu.copy(), t=t_k))
    return LinearTrajectory(states=states, records=records, config=config,
                            tensors=tensors, grid=grid)


def linear_mech_step(u_prev, mu_k_guess, t_k, tensors, config, *, grid, kappa=1.0):
    """One mechanical solve of the linearized system (thin wrapper)."""
    solver = LinearSolver(grid, tensors, config, kappa)
    return solver.mech_step(np.asarray(u_prev, dtype=float), mu_k_guess, t_k)[0]


def make_solver(grid, tensors, config, kappa=1.0, theta_c=1.0):
    return LinearSolver(grid, tensors, config, kappa, theta_c)


def linear_heat_step(mu_prev, u_rate, tensors, config, mu_flat=None, *,
                     grid, kappa=1.0, theta_c=1.0, t_k=None):
    """One heat solve of the linearized system (thin wrapper).

    mu_flat overrides config.mu_flat when given (callable of x at boundary
    quadrature points).
    """
    solver = LinearSolver(grid, tensors, config, kappa, theta_c)
    if mu_flat is not None:
        class _Cfg:
            pass
        c = _Cfg()
        c.f, c.g, c.dt = config.f, config.g, config.dt
        c.mu_flat = lambda t, x: mu_flat(x)
        solver.config = c
    if t_k is None:
        t_k = config.dt
    return solver.heat_step(np.asarray(mu_prev, dtype=float),
                            np.asarray(u_rate, dtype=float), t_k)
