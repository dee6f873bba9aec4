"""Structured Q1 grid on the unit square with quadrature-level operators.

The rectangle is Omega = [0,1]^2 with Dirichlet boundary Gamma_D = {x1 = 0}
(mechanical clamping y = id) and Neumann boundary Gamma_N the remaining three
sides; the heat-transfer (Robin) condition acts on all of Gamma.

Nodes are numbered row-major, n = iy*(nx+1) + ix.  Each cell carries a 2x2
Gauss rule.  All discrete fields are plain numpy arrays: scalar fields
(nnode,), vector fields (nnode, 2).  The grid precomputes sparse operators

    P          node values -> quadrature-point values
    Gx, Gy     node values -> quadrature-point x/y derivatives
    S_xx, S_yy, S_xy   node values -> nodal central second differences
                       (one-sided 3-point stencils at the boundary)

so that gradients, discrete Hessians, energies, residuals, and the heat-step
system are all assembled by sparse products; adjoints of the same operators
drive the mechanical optimizer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import constitutive as cst
from .constitutive import DomainError

__all__ = ["Grid2", "State", "write_field", "read_field"]

DIRICHLET = 1
NEUMANN = 2

_GAUSS = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))


def _shape_vals(xi, eta):
    return np.array([(1 - xi) * (1 - eta), xi * (1 - eta), (1 - xi) * eta, xi * eta])


def _shape_grads(xi, eta):
    # d/dxi, d/deta on the reference square [0,1]^2
    return np.array([
        [-(1 - eta), -(1 - xi)],
        [(1 - eta), -xi],
        [-eta, (1 - xi)],
        [eta, xi],
    ])


class Grid2:
    """2D structured quadrilateral grid with Q1 shape functions and 2x2 Gauss."""

    def __init__(self, nx, ny):
        if nx < 4 or ny < 4:
            raise ValueError("nx and ny must be at least 4")
        self.nx = int(nx)
        self.ny = int(ny)
        self.hx = 1.0 / self.nx
        self.hy = 1.0 / self.ny
        self.nnode = (nx + 1) * (ny + 1)
        self.ncell = nx * ny
        self.nqp = 4 * self.ncell

        ix = np.arange(nx + 1)
        iy = np.arange(ny + 1)
        X, Y = np.meshgrid(ix * self.hx, iy * self.hy)
        self.nodes = np.column_stack([X.ravel(), Y.ravel()])

        cx, cy = np.meshgrid(np.arange(nx), np.arange(ny))
        cx = cx.ravel()
        cy = cy.ravel()
        n00 = cy * (nx + 1) + cx
        self.cell_nodes = np.column_stack([n00, n00 + 1, n00 + nx + 1, n00 + nx + 2])

        # boundary labels: every boundary node labeled exactly once, Dirichlet wins
        self.labels = np.zeros(self.nnode, dtype=np.int8)
        bx = self.nodes[:, 0]
        by = self.nodes[:, 1]
        on_b = (bx == 0.0) | (bx == 1.0) | (by == 0.0) | (by == 1.0)
        self.labels[on_b] = NEUMANN
        self.labels[bx == 0.0] = DIRICHLET
        self.dirichlet_nodes = np.where(self.labels == DIRICHLET)[0]
        self.boundary_nodes = np.where(on_b)[0]
        self.free_mask = np.ones((self.nnode, 2), dtype=bool)
        self.free_mask[self.dirichlet_nodes, :] = False

        self._build_volume_ops()
        self._build_boundary_ops()
        self._build_hessian_ops()

    # ------------------------------------------------------------------
    # operator construction
    # ------------------------------------------------------------------

    def _build_volume_ops(self):
        pts = [(a, b) for b in _GAUSS for a in _GAUSS]
        N = np.stack([_shape_vals(a, b) for a, b in pts])          # (4qp, 4)
        dN = np.stack([_shape_grads(a, b) for a, b in pts])        # (4qp, 4, 2)
        dN = dN / np.array([self.hx, self.hy])
        self.shape_grads_qp = dN

        self.qp_w = np.full(self.nqp, self.hx * self.hy / 4.0)
        # qp coordinates
        base = self.nodes[self.cell_nodes[:, 0]]
        off = np.array([[a * self.hx, b * self.hy] for a, b in pts])
        self.qp_x = (base[:, None, :] + off[None, :, :]).reshape(self.nqp, 2)

        rows = np.repeat(np.arange(self.nqp), 4)
        cols = np.broadcast_to(self.cell_nodes[:, None, :], (self.ncell, 4, 4)).ravel()
        dataP = np.tile(N, (self.ncell, 1)).ravel()
        dataGx = np.tile(dN[:, :, 0], (self.ncell, 1)).ravel()
        dataGy = np.tile(dN[:, :, 1], (self.ncell, 1)).ravel()
        shape = (self.nqp, self.nnode)
        self.P = sp.csr_matrix((dataP, (rows, cols)), shape=shape)
        self.Gx = sp.csr_matrix((dataGx, (rows, cols)), shape=shape)
        self.Gy = sp.csr_matrix((dataGy, (rows, cols)), shape=shape)
        self.PT = self.P.T.tocsr()
        self.GxT = self.Gx.T.tocsr()
        self.GyT = self.Gy.T.tocsr()
        self.lumped_mass = np.asarray(self.PT @ self.qp_w)

    def _one_dim_second_diff(self, n, h):
        """(n+1)x(n+1) second-difference matrix, 3-point one-sided at the ends."""
        rows, cols, data = [], [], []
        for i in range(n + 1):
            j = min(max(i, 1), n - 1)  # center of the 3-point stencil
            rows += [i, i, i]
            cols += [j - 1, j, j + 1]
            data += [1.0 / h**2, -2.0 / h**2, 1.0 / h**2]
        return sp.csr_matrix((data, (rows, cols)), shape=(n + 1, n + 1))

    def _one_dim_first_diff(self, n, h):
        """(n+1)x(n+1) first-difference matrix, central inside, 3-point one-sided ends."""
        rows, cols, data = [], [], []
        for i in range(n + 1):
            if i == 0:
                rows += [i, i, i]
                cols += [0, 1, 2]
                data += [-1.5 / h, 2.0 / h, -0.5 / h]
            elif i == n:
                rows += [i, i, i]
                cols += [n - 2, n - 1, n]
                data += [0.5 / h, -2.0 / h, 1.5 / h]
            else:
                rows += [i, i]
                cols += [i - 1, i + 1]
                data += [-0.5 / h, 0.5 / h]
        return sp.csr_matrix((data, (rows, cols)), shape=(n + 1, n + 1))

    def _build_hessian_ops(self):
        nx, ny = self.nx, self.ny
        Dxx1 = self._one_dim_second_diff(nx, self.hx)
        Dyy1 = self._one_dim_second_diff(ny, self.hy)
        Dx1 = self._one_dim_first_diff(nx, self.hx)
        Dy1 = self._one_dim_first_diff(ny, self.hy)
        Ix = sp.identity(nx + 1, format="csr")
        Iy = sp.identity(ny + 1, format="csr")
        # node index n = iy*(nx+1) + ix  ->  kron(rows, cols) = kron(y-op, x-op)
        self.S_xx = sp.kron(Iy, Dxx1, format="csr")
        self.S_yy = sp.kron(Dyy1, Ix, format="csr")
        self.S_xy = sp.kron(Dy1, Dx1, format="csr")
        self.S_xxT = self.S_xx.T.tocsr()
        self.S_yyT = self.S_yy.T.tocsr()
        self.S_xyT = self.S_xy.T.tocsr()

    def _build_boundary_ops(self):
        nx, ny = self.nx, self.ny
        gp = _GAUSS
        edges = []   # (node_a, node_b, length, side)
        for i in range(nx):  # bottom y=0 and top y=1
            edges.append((i, i + 1, self.hx, "bottom"))
            base = ny * (nx + 1)
            edges.append((base + i, base + i + 1, self.hx, "top"))
        for j in range(ny):  # left x=0 and right x=1
            edges.append((j * (nx + 1), (j + 1) * (nx + 1), self.hy, "left"))
            edges.append((j * (nx + 1) + nx, (j + 1) * (nx + 1) + nx, self.hy, "right"))

        def build(sel):
            rows, cols, data, w, xs = [], [], [], [], []
            k = 0
            for (a, b, L, side) in edges:
                if not sel(side):
                    continue
                xa, xb = self.nodes[a], self.nodes[b]
                for t in gp:
                    rows += [k, k]
                    cols += [a, b]
                    data += [1.0 - t, t]
                    w.append(L / 2.0)
                    xs.append((1.0 - t) * xa + t * xb)
                    k += 1
            Pb = sp.csr_matrix((data, (rows, cols)), shape=(k, self.nnode))
            return Pb, np.array(w), np.array(xs).reshape(k, 2)

        self.Pb, self.wb, self.xb = build(lambda s: True)
        self.PbT = self.Pb.T.tocsr()
        self.PbN, self.wbN, self.xbN = build(lambda s: s != "left")
        self.PbNT = self.PbN.T.tocsr()
        self.trace_lump = np.asarray(self.PbT @ self.wb)

    # ------------------------------------------------------------------
    # field evaluation
    # ------------------------------------------------------------------

    def interp_qp(self, field):
        """Node values to quadrature points; (nnode,), (nnode,2) supported."""
        field = np.asarray(field, dtype=float)
        if field.ndim == 1:
            return self.P @ field
        return np.column_stack([self.P @ field[:, c] for c in range(field.shape[1])])

    def gradient_at_qp(self, field):
        """Q1 gradients at Gauss points; exact for affine fields.

        Scalar field -> (nqp, 2); vector field (nnode, 2) -> (nqp, 2, 2) with
        out[q, c, i] = d y_c / d x_i.
        """
        field = np.asarray(field, dtype=float)
        if field.shape[0] != self.nnode:
            raise ValueError("field does not match grid dimensions")
        if field.ndim == 1:
            return np.column_stack([self.Gx @ field, self.Gy @ field])
        out = np.empty((self.nqp, 2, 2))
        for c in range(2):
            out[:, c, 0] = self.Gx @ field[:, c]
            out[:, c, 1] = self.Gy @ field[:, c]
        return out

    def hessian_at_qp(self, y):
        """Discrete second gradient at Gauss points, (nqp, 2, 2, 2).

        Nodal central second differences (one-sided at the boundary) are
        interpolated bilinearly to the Gauss points; exact for quadratics.
        """
        y = np.asarray(y, dtype=float)
        if y.shape != (self.nnode, 2):
            raise ValueError("vector field does not match grid dimensions")
        out = np.empty((self.nqp, 2, 2, 2))
        for c in range(2):
            d2x = self.P @ (self.S_xx @ y[:, c])
            d2y = self.P @ (self.S_yy @ y[:, c])
            dxy = self.P @ (self.S_xy @ y[:, c])
            out[:, c, 0, 0] = d2x
            out[:, c, 1, 1] = d2y
            out[:, c, 0, 1] = dxy
            out[:, c, 1, 0] = dxy
        return out

    def hessian_adjoint(self, r):
        """Adjoint of hessian_at_qp: r (nqp, 2, 2, 2) -> nodal (nnode, 2)."""
        out = np.zeros((self.nnode, 2))
        for c in range(2):
            out[:, c] = (self.S_xxT @ (self.PT @ r[:, c, 0, 0])
                         + self.S_yyT @ (self.PT @ r[:, c, 1, 1])
                         + self.S_xyT @ (self.PT @ (r[:, c, 0, 1] + r[:, c, 1, 0])))
        return out

    def gradient_adjoint(self, r):
        """Adjoint of gradient_at_qp for vector fields: r (nqp, 2, 2) -> (nnode, 2)."""
        out = np.empty((self.nnode, 2))
        for c in range(2):
            out[:, c] = self.GxT @ r[:, c, 0] + self.GyT @ r[:, c, 1]
        return out

    def integrate(self, qp_density):
        return float(np.dot(self.qp_w, qp_density))

    # ------------------------------------------------------------------
    # norms (same quadrature as assembly)
    # ------------------------------------------------------------------

    def l2_norm(self, field):
        vals = self.interp_qp(field)
        dens = np.sum(vals * vals, axis=-1) if vals.ndim > 1 else vals * vals
        return float(np.sqrt(np.dot(self.qp_w, dens)))

    def lp_norm(self, field, pw):
        vals = self.interp_qp(field)
        dens = np.abs(vals) ** pw if vals.ndim == 1 else np.sum(np.abs(vals) ** pw, axis=-1)
        return float(np.dot(self.qp_w, dens) ** (1.0 / pw))

    def h1_norm(self, field):
        field = np.asarray(field, dtype=float)
        vals = self.interp_qp(field)
        grads = self.gradient_at_qp(field)
        if field.ndim == 1:
            dens = vals**2 + np.sum(grads**2, axis=-1)
        else:
            dens = np.sum(vals**2, axis=-1) + np.sum(grads**2, axis=(-1, -2))
        return float(np.sqrt(np.dot(self.qp_w, dens)))

    # ------------------------------------------------------------------
    # energy integrals
    # ------------------------------------------------------------------

    def integrate_energy(self, state, material, eps=1.0):
        """Quadrature of the mechanical, coupling, internal, and shifted energies.

        E_shifted = M + int W_cpl(grad y, theta_c)
                      + (alpha/2) int |W_in(grad y, theta) - W_in(grad y, theta_c)|^(2/alpha)
        with alpha taken from the material.
        """
        F = state.grad_y
        J = cst.det2(F)
        if np.any(J <= 0.0):
            raise DomainError(
                f"state infeasible: min det(grad y) = {float(np.min(J)):g} at a quadrature point")
        th = state.theta_qp
        w = self.qp_w
        alpha = material.alpha
        M = float(np.dot(w, cst.elastic_energy(material, F))
                  + np.dot(w, cst.hyper_energy(material, state.hess_y)))
        Wcpl = float(np.dot(w, cst.coupling_energy(material, F, th, eps)))
        Win = float(np.dot(w, cst.internal_energy(material, F, th, eps)))
        thc = np.full(self.nqp, material.theta_c)
        cpl_c = float(np.dot(w, cst.coupling_energy(material, F, thc, eps)))
        dev = np.abs(cst.internal_energy(material, F, th, eps)
                     - cst.internal_energy(material, F, thc, eps))
        shifted_dev = 0.5 * alpha * float(np.dot(w, dev ** (2.0 / alpha)))
        return {
            "M": M,
            "Wcpl": Wcpl,
            "Win": Win,
            "E_shifted": M + cpl_c + shifted_dev,
        }

    # ------------------------------------------------------------------
    # heat step assembly
    # ------------------------------------------------------------------

    def stiffness(self, K_qp):
        """Assemble the conduction stiffness for a per-qp SPD tensor (nqp, 2, 2)."""
        w = self.qp_w
        K = (self.GxT @ sp.diags(w * K_qp[:, 0, 0]) @ self.Gx
             + self.GxT @ sp.diags(w * K_qp[:, 0, 1]) @ self.Gy
             + self.GyT @ sp.diags(w * K_qp[:, 1, 0]) @ self.Gx
             + self.GyT @ sp.diags(w * K_qp[:, 1, 1]) @ self.Gy)
        return K.tocsr()

    def assemble_heat_system(self, state_prev, y_new, material, dt, theta_flat,
                             *, eps=1.0, alpha=None, nu=1.0, extra_sources=None):
        """Mass-lumped semi-implicit system for the new temperature.

        (c_V^(k-1)/dt) M_L theta + K(K^(k-1)) theta + kappa B_L theta
        [+ implicit heat-absorbing adiabatic diagonal]
            = (c_V^(k-1)/dt) M_L theta^(k-1) + sources

        Coefficients are frozen at the previous state; the strain rate is
        (grad y_new - grad y_prev)/dt.  The adiabatic term s = dFtheta W_cpl : rate
        is split by sign: the positive part enters the right-hand side
        multiplied by theta^(k-1) (nonnegative), the negative part is moved to
        the matrix diagonal, preserving the M-matrix sign pattern and hence
        nodal nonnegativity of the solution.

        theta_flat: external temperature at boundary nodes
        (len(grid.boundary_nodes),), or a callable x -> values evaluated at
        edge quadrature points.

        Returns (A, b, info) with per-assembly integrals in info.
        """
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        if alpha is None:
            alpha = material.alpha
        F_prev = state_prev.grad_y
        th_prev_qp = state_prev.theta_qp
        rate = (self.gradient_at_qp(y_new) - F_prev) / dt

        cv_qp = cst.heat_capacity(material, F_prev, th_prev_qp, eps)
        ML_cv = np.asarray(self.PT @ (self.qp_w * cv_qp))
        K = self.stiffness(cst.conductivity(material, F_prev, th_prev_qp))

        xi = cst.dissipation(material, F_prev, rate, th_prev_qp)["xi"]
        xi_reg = cst.regularize_xi(cst.truncate_xi(xi, alpha, material.Lambda), alpha, nu)

        dFtheta = _dftheta(material, F_prev, th_prev_qp, eps)
        s_ad = np.sum(dFtheta * rate, axis=(-1, -2))
        s_pos = np.maximum(s_ad, 0.0)
        s_neg = np.maximum(-s_ad, 0.0)

        theta_prev_qp = th_prev_qp
        src = xi_reg + s_pos * theta_prev_qp
        if extra_sources is not None:
            src = src + np.asarray(extra_sources, dtype=float)
        b = ML_cv * state_prev.theta / dt + np.asarray(self.PT @ (self.qp_w * src))

        # Robin data
        if callable(theta_flat):
            tf = np.asarray(theta_flat(self.xb), dtype=float)
            b_robin = np.asarray(self.PbT @ (self.wb * material.kappa * tf))
        else:
            tf = np.asarray(theta_flat, dtype=float)
            if tf.shape != (self.boundary_nodes.size,):
                raise ValueError("theta_flat must match the boundary node count")
            full = np.zeros(self.nnode)
            full[self.boundary_nodes] = tf
            b_robin = material.kappa * self.trace_lump * full
        b = b + b_robin

        diag = ML_cv / dt + material.kappa * self.trace_lump \
            + np.asarray(self.PT @ (self.qp_w * s_neg))
        if np.any(diag <= 0.0):
            raise DomainError("heat system diagonal must be positive (singular system)")
        A = (K + sp.diags(diag)).tocsr()

        info = {
            "xi_int": self.integrate(xi),
            "xi_reg_int": self.integrate(xi_reg),
            "adiab_pos_int": self.integrate(s_pos * theta_prev_qp),
            "adiab_neg_diag": np.asarray(self.PT @ (self.qp_w * s_neg)),
            "ML_cv": ML_cv,
            "robin_rhs": b_robin,
        }
        return A, b, info


def _dftheta(material, F, theta, eps):
    """dFtheta W_cpl with the continuous extension to theta = 0."""
    return cst.dFtheta_coupling(material, F, theta, eps)


# ---------------------------------------------------------------------------
# state
# ---------------------------------------------------------------------------

@dataclass
class State:
    """Deformation/temperature pair at one time level.

    Only the nodal fields are stored (trajectories hold many states); the
    quadrature-point views grad_y, hess_y, grad_theta, theta_qp are computed
    on access.  Callers in hot loops bind them to locals once.
    """

    y: np.ndarray          # (nnode, 2)
    theta: np.ndarray      # (nnode,)
    t: float
    grid: Grid2

    @property
    def grad_y(self):
        return self.grid.gradient_at_qp(self.y)

    @property
    def hess_y(self):
        return self.grid.hessian_at_qp(self.y)

    @property
    def grad_theta(self):
        return self.grid.gradient_at_qp(self.theta)

    @property
    def theta_qp(self):
        return self.grid.P @ self.theta

    @classmethod
    def create(cls, grid, y, theta, t):
        y = np.asarray(y, dtype=float)
        theta = np.asarray(theta, dtype=float)
        if y.shape != (grid.nnode, 2) or theta.shape != (grid.nnode,):
            raise ValueError("field dimensions do not match grid")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(theta))):
            raise DomainError("state contains non-finite values")
        if np.any(theta < 0.0):
            raise DomainError(
                f"nodal temperature must be nonnegative, min = {float(np.min(theta)):g}")
        idb = grid.dirichlet_nodes
        if np.max(np.abs(y[idb] - grid.nodes[idb])) > 1e-12:
            raise DomainError("y must equal the identity on the Dirichlet boundary")
        J = cst.det2(grid.gradient_at_qp(y))
        if np.any(J <= 0.0):
            raise DomainError(
                f"det(grad y) must be positive at quadrature points, min = {float(np.min(J)):g}")
        return cls(y=y, theta=theta, t=float(t), grid=grid)


# ---------------------------------------------------------------------------
# field dump format
# ---------------------------------------------------------------------------

def write_field(fh, name, grid, values):
    """Plain-text field block: header then row-major node values, 17 digits."""
    values = np.asarray(values, dtype=float)
    comps = 1 if values.ndim == 1 else values.shape[1]
    fh.write(f"field {name} nx {grid.nx} ny {grid.ny} comps {comps}\n")
    vv = values.reshape(grid.nnode, comps)
    for row in vv:
        fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def read_field(fh):
    """Read one field block written by write_field; returns (name, values)."""
    header = fh.readline().split()
    if len(header) != 8 or header[0] != "field":
        raise ValueError(f"malformed field header: {' '.join(header)}")
    name = header[1]
    nx, ny, comps = int(header[3]), int(header[5]), int(header[7])
    nnode = (nx + 1) * (ny + 1)
    vals = np.empty((nnode, comps))
    for i in range(nnode):
        vals[i] = [float(v) for v in fh.readline().split()]
    return name, (vals[:, 0] if comps == 1 else vals)
