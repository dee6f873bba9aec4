"""Time-discrete solver for the nonlinear thermoviscoelastic system.

Staggered stepping: each step first minimizes the incremental functional

    Phi_tau(y) = int W(grad y, theta_prev) + H(hess y) dx
                 + tau * int R(grad y_prev, (grad y - grad y_prev)/tau, theta_prev) dx
                 - <l_eps(t), y>

over deformations with y = id on Gamma_D (limited-memory quasi-Newton with a
determinant-guarded backtracking line search), then advances the temperature
with the mass-lumped semi-implicit heat step of :meth:`Grid2.assemble_heat_system`.

External data f, g, mu_flat are callables of (t, x) evaluated at step
midpoints; the eps-scalings f_eps = eps f, g_eps = eps g,
theta_flat = theta_c + eps^alpha mu_flat, y_0 = id + eps u_0,
theta_0 = theta_c + eps^alpha mu_0 are applied internally, so the same config
drives a whole eps-sweep and the linear reference.

A run is single threaded and deterministic: identical configs produce
bit-identical trajectories.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import constitutive as cst
from .constitutive import DomainError
from .grid import Grid2, State, write_field

__all__ = [
    "SimConfig",
    "Trajectory",
    "SolverError",
    "MechanicalSolveError",
    "HeatSolveError",
    "mechanical_step",
    "heat_step",
    "initial_state",
    "run",
    "TRAJ_CSV_COLUMNS",
]


class SolverError(RuntimeError):
    """Base class for solver failures (nonzero CLI exit 3)."""


class MechanicalSolveError(SolverError):
    pass


class HeatSolveError(SolverError):
    pass


def _zero_vec(t, x):
    return np.zeros((x.shape[0], 2))


def _zero_scalar(t, x):
    return np.zeros(x.shape[0])


def _zero_vec_x(x):
    return np.zeros((x.shape[0], 2))


def _zero_scalar_x(x):
    return np.zeros(x.shape[0])


@dataclass
class SimConfig:
    """Time stepping, scaling, and data for one nonlinear (or linear) run.

    f, g: body force / boundary traction densities, callables (t, x) -> (n, 2);
    mu_flat: rescaled external temperature (t, x) -> (n,);
    u0, mu0: initial rescaled displacement/temperature, callables x -> values.
    The unscaled fields are stored; eps-scalings are applied by the solver.
    """

    dt: float = 1e-3
    T: float = 0.5
    eps: float = 0.1
    alpha: float = 2.0
    nu: float = 0.01
    Lambda: float = 10.0
    nx: int = 32
    ny: int = 32
    f: Callable = _zero_vec
    g: Callable = _zero_vec
    mu_flat: Callable = _zero_scalar
    u0: Callable = _zero_vec_x
    mu0: Callable = _zero_scalar_x
    pg_tol: float = 1e-9
    max_iters: int = 500
    det_floor: float = 1e-3
    heat_rtol: float = 1e-10
    heat_maxiter: int = 10000
    lbfgs_memory: int = 10
    store_states: bool = True

    def __post_init__(self):
        if self.dt <= 0.0 or self.T <= 0.0 or self.dt > self.T + 1e-15:
            raise ValueError("need 0 < dt <= T")
        if not (0.0 < self.eps <= 1.0):
            raise ValueError("eps must lie in (0, 1]")
        if not (1.0 <= self.alpha <= 2.0):
            raise ValueError("alpha must lie in [1, 2]")
        if not (0.0 < self.nu <= 1.0):
            raise ValueError("nu must lie in (0, 1]")
        if self.Lambda < 1.0:
            raise ValueError("Lambda must be >= 1")

    @property
    def n_steps(self):
        return int(np.ceil(self.T / self.dt - 1e-12))


TRAJ_CSV_COLUMNS = ("t", "M", "Wcpl", "Win", "E_shifted", "diss_cum",
                    "theta_min", "theta_max", "mech_iters", "heat_res")


@dataclass
class Trajectory:
    """States plus per-step solver records of one run."""

    states: list
    records: list
    config: SimConfig
    material: cst.MaterialModel
    grid: Grid2

    @property
    def times(self):
        return np.array([s.t for s in self.states])

    def to_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write(",".join(TRAJ_CSV_COLUMNS) + "\n")
            for r in self.records:
                fh.write(",".join(f"{r[c]:.17g}" if c not in ("mech_iters",)
                                  else str(r[c]) for c in TRAJ_CSV_COLUMNS) + "\n")

    def dump_states(self, outdir, every=1):
        """Write plain-text field dumps (y, theta) every `every` steps."""
        meta = []
        for k, st in enumerate(self.states):
            if k % every != 0 and k != len(self.states) - 1:
                continue
            fname = f"state_{k:06d}.txt"
            with open(os.path.join(outdir, fname), "w", newline="\n") as fh:
                write_field(fh, "y", self.grid, st.y)
                write_field(fh, "theta", self.grid, st.theta)
            meta.append((k, st.t, fname))
        with open(os.path.join(outdir, "states_meta.csv"), "w", newline="\n") as fh:
            fh.write("step,t,file\n")
            for k, t, fname in meta:
                fh.write(f"{k},{t:.17g},{fname}\n")


# ---------------------------------------------------------------------------
# load vector
# ---------------------------------------------------------------------------

def load_vector(grid, config, material, t_mid):
    """Nodal vector of <l_eps(t), .> = int eps f . v + int_Gamma_N eps g . v."""
    eps = config.eps
    fq = np.asarray(config.f(t_mid, grid.qp_x), dtype=float)
    gq = np.asarray(config.g(t_mid, grid.xbN), dtype=float)
    out = np.empty((grid.nnode, 2))
    for c in range(2):
        out[:, c] = grid.PT @ (grid.qp_w * eps * fq[:, c]) \
            + grid.PbNT @ (grid.wbN * eps * gq[:, c])
    return out


# ---------------------------------------------------------------------------
# incremental mechanical step
# ---------------------------------------------------------------------------

_ID2 = np.eye(2)


def _ref_grads(grid):
    return grid.shape_grads_qp


def _elastic_precond_block(grid):
    """Constant per-cell 8x8 block of the small-strain form 8 |sym grad z|^2."""
    cached = getattr(grid, "_elastic_precond_block", None)
    if cached is not None:
        return cached
    dN = _ref_grads(grid)
    dNna = dN.transpose(0, 2, 1)
    eye = np.broadcast_to(_ID2, (1, 4, 2, 2))
    t1 = eye.transpose(0, 1, 3, 2)[:, :, :, None, None, :] \
        * dNna[None, :, None, :, :, None]
    Be = 0.5 * (t1 + t1.transpose(0, 1, 3, 2, 4, 5))
    mult = np.array([1.0, 2.0, 0.0, 1.0]).reshape(1, 1, 2, 2, 1, 1)
    coef_e = 8.0 * grid.qp_w.reshape(grid.ncell, 4)[:1]
    Bw = Be * (coef_e[:, :, None, None, None, None] * mult)
    X = Bw.reshape(1, 16, 8)
    Y = Be.reshape(1, 16, 8)
    block = np.matmul(X.transpose(0, 2, 1), Y)[0]
    grid._elastic_precond_block = block
    return block


class _IncrementalFunctional:
    """Phi_tau and its nodal gradient for fixed previous state and loads."""

    def __init__(self, grid, state_prev, config, material, load_vec):
        self.grid = grid
        self.mat = material
        self.tau = config.dt
        self.eps = config.eps
        self.det_floor = config.det_floor
        self.F_prev = state_prev.grad_y
        self.th_prev = state_prev.theta_qp
        self.dfac = 1.0 + material.eta_D / (1.0 + self.th_prev)
        self.load_vec = load_vec
        self.p = material.p
        self.c_H = material.c_H

    def precond_solve(self):
        """Factorized quadratic model of Phi_tau (viscous + small-strain elastic).

        The viscous term is exactly quadratic with Hessian
        (2 dfac / tau) |sym(F_prev^T grad z)|^2; adding the small-strain
        elastic form 8 |sym grad z|^2 (the exact elasticity tensor of the
        single-well part at the identity) gives an SPD matrix on the free
        dofs whose inverse serves as the quasi-Newton seed.
        """
        grid = self.grid
        ncell = grid.ncell
        dN = _ref_grads(grid)                     # (4qp, 4node, 2)
        F0 = self.F_prev.reshape(ncell, 4, 2, 2)
        coef_v = (2.0 / self.tau) * (self.dfac * grid.qp_w).reshape(ncell, 4)

        # B[c,q,m,n,a,k] = d sym(F0^T grad z)_mn / d z_{a,k}
        F0mk = F0.transpose(0, 1, 3, 2)           # [c,q,m,k]
        dNna = dN.transpose(0, 2, 1)              # [q,n,a]
        t1 = F0mk[:, :, :, None, None, :] * dNna[None, :, None, :, :, None]
        Bv = 0.5 * (t1 + t1.transpose(0, 1, 3, 2, 4, 5))
        mult = np.array([1.0, 2.0, 0.0, 1.0]).reshape(1, 1, 2, 2, 1, 1)
        Bw = Bv * (coef_v[:, :, None, None, None, None] * mult)
        X = Bw.reshape(ncell, 16, 8)
        Y = Bv.reshape(ncell, 16, 8)
        data = np.matmul(X.transpose(0, 2, 1), Y)  # (ncell, 8, 8)
        data += _elastic_precond_block(grid)
        dof = (2 * grid.cell_nodes[:, :, None] + np.arange(2)[None, None, :])
        dof = dof.reshape(ncell, 8)
        rows = np.broadcast_to(dof[:, :, None], data.shape).ravel()
        cols = np.broadcast_to(dof[:, None, :], data.shape).ravel()
        n = 2 * grid.nnode
        K = sp.csr_matrix((data.ravel(), (rows, cols)), shape=(n, n))
        idx = np.where(grid.free_mask.ravel())[0]
        Kf = K[idx][:, idx].tocsc()
        Kf = Kf + sp.identity(idx.size, format="csc") * (1e-10 * Kf.diagonal().max())
        lu = spla.splu(Kf)
        return lu.solve

    def feasible(self, y):
        F = self.grid.gradient_at_qp(y)
        return bool(np.all(cst.det2(F) > self.det_floor)), F

    def value_grad(self, y):
        """Returns (Phi, grad) or (inf, None) when the determinant guard trips."""
        grid = self.grid
        ok, F = self.feasible(y)
        if not ok:
            return np.inf, None
        w = grid.qp_w
        W, dW = cst.free_energy_and_dF(self.mat, F, self.th_prev, self.eps)
        # viscous: tau R(F_prev, (F - F_prev)/tau) = dfac |Cdot|^2 / (2 tau)
        dF = F - self.F_prev
        Cdot = cst.tmul2(dF, self.F_prev)
        Cdot = Cdot + np.swapaxes(Cdot, -1, -2)
        visc = cst._frob2(Cdot) * self.dfac / (2.0 * self.tau)
        # hypergradient
        G = grid.hessian_at_qp(y)
        n2 = np.sum(G * G, axis=(-1, -2, -3))
        hyp = self.c_H * cst._ipow(n2, self.p // 2)
        phi = float(np.dot(w, W + visc + hyp) - np.sum(self.load_vec * y))

        r = w[:, None, None] * (dW + ((2.0 / self.tau) * self.dfac)[:, None, None]
                                * cst.mul2(self.F_prev, Cdot))
        grad = grid.gradient_adjoint(r)
        coef = self.c_H * self.p * cst._ipow(n2, self.p // 2 - 1)
        grad += grid.hessian_adjoint((w * coef)[:, None, None, None] * G)
        grad -= self.load_vec
        return phi, grad


def _lbfgs_minimize(fun, x0, free, pg_tol, max_iters, memory, h0_solve=None):
    """Limited-memory quasi-Newton with Armijo backtracking on the free dofs.

    `fun` maps full nodal fields to (value, full gradient); `free` is the
    boolean dof mask; `h0_solve` applies the inverse of an SPD seed matrix
    (identity scaling when None).  The line search halves the step until the
    iterate is feasible (fun returns a finite value) and Armijo-decreasing.
    Returns (y, info) and raises MechanicalSolveError on non-descent or
    underflow.
    """
    y = x0.copy()
    f0, g_full = fun(y)
    if not np.isfinite(f0):
        raise MechanicalSolveError("initial iterate infeasible (det floor)")
    f_start = f0
    g = g_full[free]
    svecs, yvecs, rhos = [], [], []
    iters = 0
    ls_underflow = False
    # energy differences are resolvable only to ~eps*(1+|f|); near the optimum
    # the Armijo decrement drops below that, so allow a roundoff slack there
    # (the descent certificate below still enforces monotonicity to 1e-11)
    f_slack = 1e-14 * (1.0 + abs(f0))
    while True:
        pg = float(np.max(np.abs(g))) if g.size else 0.0
        if pg <= pg_tol * (1.0 + abs(f0)):
            break
        if iters >= max_iters:
            raise MechanicalSolveError(
                f"mechanical step: no convergence in {max_iters} iterations "
                f"(projected gradient {pg:.3e})")
        # two-loop recursion around the SPD seed
        q = g.copy()
        alphas = []
        for s, yv, rho in zip(reversed(svecs), reversed(yvecs), reversed(rhos)):
            a = rho * np.dot(s, q)
            alphas.append(a)
            q -= a * yv
        if h0_solve is not None:
            q = h0_solve(q)
        elif yvecs:
            gamma = np.dot(svecs[-1], yvecs[-1]) / np.dot(yvecs[-1], yvecs[-1])
            q = gamma * q
        for (s, yv, rho), a in zip(zip(svecs, yvecs, rhos), reversed(alphas)):
            b = rho * np.dot(yv, q)
            q += (a - b) * s
        p = -q
        gp = np.dot(g, p)
        if gp >= 0.0:  # safeguard: fall back to seed-preconditioned descent
            p = -h0_solve(g) if h0_solve is not None else -g
            gp = np.dot(g, p)
            svecs, yvecs, rhos = [], [], []
            if gp >= 0.0:
                p = -g
                gp = -np.dot(g, g)
        step = 1.0
        f_new = np.inf
        g_new_full = None
        for _ in range(60):
            y_try = y.copy()
            y_try[free] += step * p
            f_new, g_new_full = fun(y_try)
            if np.isfinite(f_new) and f_new <= f0 + 1e-4 * step * gp + f_slack:
                break
            step *= 0.5
        else:
            ls_underflow = True
            break
        s_vec = step * p
        g_new = g_new_full[free]
        y_vec = g_new - g
        sy = np.dot(s_vec, y_vec)
        if sy > 1e-14 * np.dot(y_vec, y_vec):
            svecs.append(s_vec)
            yvecs.append(y_vec)
            rhos.append(1.0 / sy)
            if len(svecs) > memory:
                svecs.pop(0)
                yvecs.pop(0)
                rhos.pop(0)
        y[free] += s_vec
        f0 = f_new
        g = g_new
        iters += 1
    if ls_underflow:
        pg = float(np.max(np.abs(g)))
        raise MechanicalSolveError(
            f"mechanical step: line-search step-size underflow "
            f"(projected gradient {pg:.3e}, det floor or nonsmoothness)")
    if f0 > f_start + 1e-11 * (1.0 + abs(f_start)):
        raise MechanicalSolveError(
            f"mechanical step: non-descent ({f0 - f_start:.3e} above the start)")
    info = {"iters": iters, "pg_inf": float(np.max(np.abs(g))) if g.size else 0.0,
            "Phi": f0}
    return y, info


def mechanical_step(state_prev, t_k, config, material):
    """One incremental minimization; returns (y_new, info).

    info records Phi before/after, the descent slack, iteration count, the
    terminal projected-gradient norm, and the load vector used (for balance
    diagnostics); Phi_tau(y_new) <= Phi_tau(y_prev) is guaranteed by the
    monotone line search.
    """
    grid = state_prev.grid
    t_mid = t_k - 0.5 * config.dt
    lvec = load_vector(grid, config, material, t_mid)
    func = _IncrementalFunctional(grid, state_prev, config, material, lvec)
    free = grid.free_mask
    phi0, _ = func.value_grad(state_prev.y)
    y_new, info = _lbfgs_minimize(func.value_grad, state_prev.y, free,
                                  config.pg_tol, config.max_iters,
                                  config.lbfgs_memory,
                                  h0_solve=func.precond_solve())
    info["Phi_before"] = phi0
    info["Phi_after"] = info.pop("Phi")
    info["descent_slack"] = info["Phi_after"] - phi0
    info["load_vec"] = lvec
    return y_new, info


def heat_step(state_prev, y_new, t_k, config, material):
    """Semi-implicit heat update; returns (theta_new, info)."""
    grid = state_prev.grid
    t_mid = t_k - 0.5 * config.dt
    eps = config.eps

    def theta_flat(x):
        return material.theta_c + eps**config.alpha \
            * np.asarray(config.mu_flat(t_mid, x), dtype=float)

    A, b, info = grid.assemble_heat_system(
        state_prev, y_new, material, config.dt, theta_flat,
        eps=eps, alpha=config.alpha, nu=config.nu)
    M_inv = sp.diags(1.0 / A.diagonal())
    iters = [0]

    def _count(_):
        iters[0] += 1

    theta, cg_info = spla.cg(A, b, x0=state_prev.theta, rtol=config.heat_rtol,
                             atol=0.0, maxiter=config.heat_maxiter, M=M_inv,
                             callback=_count)
    if cg_info != 0:
        raise HeatSolveError(f"heat step CG failed to converge (info={cg_info})")
    res = float(np.linalg.norm(A @ theta - b) / max(np.linalg.norm(b), 1e-300))
    info = dict(info)
    info["heat_res"] = res
    info["heat_iters"] = iters[0]
    info["theta_flat_min"] = float(np.min(theta_flat(grid.xb)))
    return theta, info


def initial_state(grid, config, material):
    """Initial state y = id + eps u0, theta = theta_c + eps^alpha mu0 (validated)."""
    u0 = np.asarray(config.u0(grid.nodes), dtype=float)
    mu0 = np.asarray(config.mu0(grid.nodes), dtype=float)
    y0 = grid.nodes + config.eps * u0
    th0 = material.theta_c + config.eps**config.alpha * mu0
    try:
        return State.create(grid, y0, th0, 0.0)
    except DomainError as exc:
        raise DomainError(f"invalid initial data: {exc}") from exc


def run(config, material, grid=None):
    """Alternate mechanical and heat steps over ceil(T/dt) steps.

    Records per step: energies (via integrate_energy), dissipation increment
    tau * int xi (untruncated rate, frozen coefficients), regularized source
    integral, temperature extrema, optimizer and CG diagnostics.  Deterministic
    for a given config; errors are re-raised with the failing step index.
    """
    if grid is None:
        grid = Grid2(config.nx, config.ny)
    if abs(material.alpha - config.alpha) > 1e-12:
        raise ValueError("config.alpha must match material.alpha")
    if abs(material.Lambda - config.Lambda) > 1e-12:
        raise ValueError("config.Lambda must match material.Lambda")
    state = initial_state(grid, config, material)
    states = [state]
    E = grid.integrate_energy(state, material, config.eps)
    rec0 = {"t": 0.0, **E, "diss_inc": 0.0, "diss_cum": 0.0, "xi_reg_int": 0.0,
            "theta_min": float(np.min(state.theta)),
            "theta_max": float(np.max(state.theta)),
            "mech_iters": 0, "heat_res": 0.0, "heat_iters": 0,
            "Phi_before": 0.0, "Phi_after": 0.0, "descent_slack": 0.0,
            "pg_inf": 0.0, "dy_l1": 0.0, "load_pairing": 0.0,
            "adiab_pos_int": 0.0, "balance_tol": 0.0}
    records = [rec0]
    diss_cum = 0.0
    n = config.n_steps
    for k in range(1, n + 1):
        t_k = k * config.dt
        try:
            y_new, minfo = mechanical_step(state, t_k, config, material)
            theta_new, hinfo = heat_step(state, y_new, t_k, config, material)
            new_state = State.create(grid, y_new, theta_new, t_k)
        except (SolverError, DomainError) as exc:
            raise type(exc)(f"step {k} (t = {t_k:g}): {exc}") from exc

        tau = config.dt
        rate = (new_state.grad_y - state.grad_y) / tau
        xi = cst.dissipation(material, state.grad_y, rate, state.theta_qp)["xi"]
        diss_inc = tau * grid.integrate(xi)
        diss_cum += diss_inc
        E = grid.integrate_energy(new_state, material, config.eps)
        dy = y_new - state.y
        rec = {
            "t": t_k, **E,
            "diss_inc": diss_inc, "diss_cum": diss_cum,
            "xi_reg_int": hinfo["xi_reg_int"],
            "theta_min": float(np.min(theta_new)),
            "theta_max": float(np.max(theta_new)),
            "mech_iters": minfo["iters"],
            "heat_res": hinfo["heat_res"],
            "heat_iters": hinfo["heat_iters"],
            "Phi_before": minfo["Phi_before"],
            "Phi_after": minfo["Phi_after"],
            "descent_slack": minfo["descent_slack"],
            "pg_inf": minfo["pg_inf"],
            "dy_l1": float(np.sum(np.abs(dy[grid.free_mask]))),
            "load_pairing": float(np.sum(minfo["load_vec"] * dy)),
            "adiab_pos_int": hinfo["adiab_pos_int"],
            "balance_tol": 0.0,
        }
        records.append(rec)
        if config.store_states:
            states.append(new_state)
        else:
            states = [states[0], new_state]
        state = new_state
    return Trajectory(states=states, records=records, config=config,
                      material=material, grid=grid)
