"""Command line interface.

    thermovisc <validate|simulate|linearize-sweep|diagnose>
               --config FILE --out DIR [--eps LIST] [--alpha X] [--parallel N]

Exit codes: 0 all checks pass, 2 configuration error, 3 solver failure,
4 at least one check failed.  Every output directory receives the resolved
configuration and the tool version; all outputs are deterministic functions
of the configuration (byte-identical across reruns).
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from . import constitutive as cst
from . import diagnostics as diag
from .config import (ConfigError, build_material, build_sim_config, parse_config,
                     render_config)
from .grid import Grid2, read_field
from .linear_sim import run_linear
from .nonlinear_sim import SimConfig, SolverError, Trajectory, run
from .constitutive import DomainError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_CHECK = 4


def _write_common(outdir, resolved):
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "resolved_config.txt"), "w", newline="\n") as fh:
        fh.write(render_config(resolved))
    with open(os.path.join(outdir, "VERSION"), "w", newline="\n") as fh:
        fh.write(f"thermovisc {__version__}\n")


def _load_config(path):
    if path is None:
        return parse_config("")
    with open(path, "r") as fh:
        return parse_config(fh.read())


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------

def phi_beta_suite(n_s=40, n_beta=25):
    """Grid check of the regularized-positive-part inequalities.

    On an (s, beta) grid with n_s * n_beta >= 1e3 points verifies
    phi(s) <= phi'(s) s <= 4 phi(s), phi''(s) s <= 3 phi'(s), phi(s) <= s_+,
    and the monotonicity of the family as beta decreases.
    """
    rep = cst.CertificationReport()
    s = np.linspace(-2.0, 2.0, n_s)
    betas = 2.0 ** (-np.arange(n_beta) / 2.4)
    S, B = np.meshgrid(s, betas)
    tol = 1e-12
    phi = cst.phi_beta(S, 1.0) * 0.0
    viol1 = viol2 = viol3 = viol4 = 0
    prev_phi = None
    prev_d1 = None
    mono_ok = True
    for b in betas:
        phi = cst.phi_beta(s, b)
        d1 = cst.phi_beta_d1(s, b)
        d2 = cst.phi_beta_d2(s, b)
        viol1 += int(np.sum(phi > d1 * s + tol))
        viol2 += int(np.sum(d1 * s > 4.0 * phi + tol))
        viol3 += int(np.sum(d2 * s > 3.0 * d1 + tol))
        viol4 += int(np.sum(phi > np.maximum(s, 0.0) + tol))
        if prev_phi is not None and (np.any(phi < prev_phi - tol)
                                     or np.any(d1 < prev_d1 - tol)):
            mono_ok = False
        prev_phi, prev_d1 = phi, d1
    npts = n_s * n_beta
    rep.add("phi_le_dphi_s", f"{viol1} violations / {npts}", "== 0", viol1 == 0)
    rep.add("dphi_s_le_4phi", f"{viol2} violations / {npts}", "== 0", viol2 == 0)
    rep.add("d2phi_s_le_3dphi", f"{viol3} violations / {npts}", "== 0", viol3 == 0)
    rep.add("phi_le_pos_part", f"{viol4} violations / {npts}", "== 0", viol4 == 0)
    rep.add("family_monotone_in_beta", "nondecreasing as beta decreases",
            "monotone", mono_ok)
    lim_err = float(np.max(np.abs(cst.phi_beta(s, betas[-1]) - np.maximum(s, 0.0))))
    rep.add("family_limit_pos_part", f"{lim_err:.3e}", f"<= {betas[-1]:.2e}",
            lim_err <= betas[-1])
    return rep


def cmd_validate(args):
    resolved = _load_config(args.config)
    _write_common(args.out, resolved)
    material = build_material(resolved)
    rep = cst.validate_material(material, sample_budget=resolved["validate_samples"],
                                seed=resolved["seed"])
    phis = phi_beta_suite()
    with open(os.path.join(args.out, "certification.txt"), "w", newline="\n") as fh:
        fh.write(rep.render())
        fh.write(phis.render())
    ok = rep.passed and phis.passed
    print(f"validate: {'PASS' if ok else 'FAIL'} "
          f"({len(rep.checks) + len(phis.checks)} checks)")
    return EXIT_OK if ok else EXIT_CHECK


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(args):
    resolved = _load_config(args.config)
    if args.eps is not None:
        if len(args.eps) != 1:
            raise ConfigError("simulate takes a single --eps value")
        resolved["eps"] = args.eps[0]
    if args.alpha is not None:
        resolved["alpha"] = args.alpha
    _write_common(args.out, resolved)
    material = build_material(resolved)
    cfg = build_sim_config(resolved)
    if resolved["model"] == "linear":
        tensors = cst.linearized_tensors(material, alpha=cfg.alpha)
        traj = run_linear(cfg, tensors, kappa=material.kappa,
                          theta_c=material.theta_c)
        traj.to_csv(os.path.join(args.out, "trajectory.csv"))
        print(f"simulate(linear): {cfg.n_steps} steps, "
              f"final E0 = {traj.records[-1]['E0']:.6g}")
        return EXIT_OK
    traj = run(cfg, material)
    traj.to_csv(os.path.join(args.out, "trajectory.csv"))
    if resolved["dump_every"] > 0:
        traj.dump_states(args.out, every=resolved["dump_every"])
    tmin = min(r["theta_min"] for r in traj.records)
    print(f"simulate: {cfg.n_steps} steps, min theta = {tmin:.6g}, "
          f"final E_shifted = {traj.records[-1]['E_shifted']:.6g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# linearize-sweep
# ---------------------------------------------------------------------------

def _sweep_point(payload):
    """Run one nonlinear eps-point plus the linear reference; summarize.

    Module-level so a process pool can pickle it; the linear reference is
    deterministic and cheap, so each worker recomputes it instead of shipping
    trajectories across processes.
    """
    resolved, eps, alpha = payload
    material = build_material(resolved)
    cfg = build_sim_config(resolved, eps=eps, alpha=alpha)
    grid = Grid2(cfg.nx, cfg.ny)
    material = _rebind_material(material, alpha)
    traj = run(cfg, material, grid)
    tensors = cst.linearized_tensors(material, alpha=alpha)
    lin = run_linear(cfg, tensors, kappa=material.kappa, grid=grid,
                     theta_c=material.theta_c)
    err = diag.linearization_error(traj, lin, eps, alpha)
    quantities = _scaling_quantities(traj, eps)
    return {"eps": eps, "errors": err, "quantities": quantities}


def _rebind_material(material, alpha):
    if abs(material.alpha - alpha) > 1e-12:
        material = dataclasses.replace(material, alpha=float(alpha))
    return material


def _scaling_quantities(traj, eps):
    grid = traj.grid
    cfg = traj.config
    mat = traj.material
    out = {}
    out["E_shifted/eps^2"] = max(r["E_shifted"] for r in traj.records) / eps**2
    out["y-id_H1/eps"] = max(grid.h1_norm(s.y - grid.nodes) for s in traj.states) / eps
    pw = 2.0 / cfg.alpha
    out["theta-dev/eps^alpha"] = max(
        grid.lp_norm(s.theta - mat.theta_c, pw) for s in traj.states) / eps**cfg.alpha
    out["dissipation/eps^2"] = traj.records[-1]["diss_cum"] / eps**2
    acc = 0.0
    for k in range(1, len(traj.states)):
        rate = (traj.states[k].grad_y - traj.states[k - 1].grad_y) / cfg.dt
        acc += cfg.dt * grid.integrate(cst._frob2(rate))
    out["strain_rate_L2/eps"] = float(np.sqrt(acc)) / eps
    return out


def cmd_linearize_sweep(args):
    resolved = _load_config(args.config)
    eps_list = args.eps if args.eps is not None else [0.2, 0.1, 0.05]
    if len(eps_list) < 2:
        raise ConfigError("linearize-sweep needs at least 2 eps values")
    alpha = args.alpha if args.alpha is not None else resolved["alpha"]
    resolved["alpha"] = alpha
    _write_common(args.out, resolved)
    payloads = [(resolved, e, alpha) for e in sorted(eps_list, reverse=True)]
    if args.parallel and args.parallel > 1:
        with ProcessPoolExecutor(max_workers=args.parallel) as pool:
            results = list(pool.map(_sweep_point, payloads))
    else:
        results = [_sweep_point(p) for p in payloads]

    cols = ("u_H1_sup", "du_L2", "mu_L2")
    with open(os.path.join(args.out, "convergence_table.csv"), "w",
              newline="\n") as fh:
        fh.write("eps," + ",".join(cols) + "\n")
        for r in results:
            fh.write(f"{r['eps']:.17g}," +
                     ",".join(f"{r['errors'][c]:.17g}" for c in cols) + "\n")

    rep = cst.CertificationReport()
    for c in cols:
        vals = [r["errors"][c] for r in results]
        dec = all(b < a for a, b in zip(vals, vals[1:]))
        rep.add(f"monotone[{c}]", ",".join(f"{v:.6g}" for v in vals),
                "strictly decreasing in eps", dec)

    qnames = list(results[0]["quantities"])
    for q in qnames:
        vals = np.array([r["quantities"][q] for r in results])
        if np.max(vals) <= 1e-10:  # quadrature roundoff counts as zero
            rep.add(f"scaling[{q}]", "all zero (within roundoff)",
                    "ratio <= 3", True)
            continue
        ratio = float(np.max(vals) / max(np.min(vals), 1e-300))
        rep.add(f"scaling[{q}]",
                ",".join(f"{v:.6g}" for v in vals) + f" ratio {ratio:.4g}",
                "ratio <= 3", ratio <= 3.0)
    with open(os.path.join(args.out, "scaling_report.txt"), "w", newline="\n") as fh:
        fh.write(rep.render())
    print(rep.render())
    return EXIT_OK if rep.passed else EXIT_CHECK


# ---------------------------------------------------------------------------
# diagnose
# ---------------------------------------------------------------------------

def _load_states(outdir, grid):
    meta_path = os.path.join(outdir, "states_meta.csv")
    if not os.path.exists(meta_path):
        raise ConfigError(
            f"no state dumps in {outdir}; rerun simulate with dump_every = 1")
    from .grid import State
    states = []
    strides = []
    with open(meta_path) as fh:
        header = fh.readline()
        for line in fh:
            step_s, t_s, fname = line.strip().split(",")
            strides.append(int(step_s))
            with open(os.path.join(outdir, fname)) as sfh:
                _, y = read_field(sfh)
                _, theta = read_field(sfh)
            states.append(State.create(grid, y, theta, float(t_s)))
    if len(strides) >= 2 and any(b - a != 1 for a, b in zip(strides, strides[1:])):
        raise ConfigError("diagnose requires dump_every = 1 (contiguous states)")
    return states


def cmd_diagnose(args):
    resolved = _load_config(os.path.join(args.out, "resolved_config.txt")
                            if args.config is None else args.config)
    material = build_material(resolved)
    cfg = build_sim_config(resolved)
    grid = Grid2(cfg.nx, cfg.ny)
    states = _load_states(args.out, grid)
    records = rebuild_records(states, cfg, material, grid)
    traj = Trajectory(states=states, records=records, config=cfg,
                      material=material, grid=grid)
    eb = diag.energy_balance_residual(traj, cfg, material)
    tmin = np.array([float(np.min(s.theta)) for s in states])
    lam0 = tmin[0]
    tt = traj.times
    with np.errstate(divide="ignore"):
        rates = np.where(tt[1:] > 0,
                         -np.log(np.maximum(tmin[1:], 1e-300) / lam0) / tt[1:], 0.0)
    chat = max(0.0, float(np.max(rates))) if len(tt) > 1 else 0.0
    pos = diag.positivity_certificate(traj, lam0, 2.0 * chat, material)
    rep = cst.CertificationReport()
    rep.add("energy_balance_residual", f"max {eb['max_residual']:.3e}",
            "<= 10 (opt tol + heat tol) x cond", eb["passed"])
    rep.add("theta_positive", f"min {float(np.min(tmin)):.6g}", "> 0",
            bool(np.all(tmin > 0.0)))
    rep.add("floor_rate_Chat", f"{chat:.6g}", "finite", np.isfinite(chat))
    for c in pos["report"].checks:
        rep.checks.append(c)
    with open(os.path.join(args.out, "diagnostics.txt"), "w", newline="\n") as fh:
        fh.write(rep.render())
    print(rep.render())
    return EXIT_OK if rep.passed else EXIT_CHECK


def rebuild_records(states, cfg, material, grid):
    """Recompute the per-step records needed by diagnostics from raw states."""
    from .nonlinear_sim import _IncrementalFunctional, load_vector
    records = []
    diss_cum = 0.0
    for k, st in enumerate(states):
        E = grid.integrate_energy(st, material, cfg.eps)
        if k == 0:
            records.append({"t": st.t, **E, "diss_inc": 0.0, "diss_cum": 0.0,
                            "theta_min": float(np.min(st.theta)),
                            "theta_max": float(np.max(st.theta)),
                            "mech_iters": 0, "heat_res": 0.0,
                            "Phi_before": 0.0, "Phi_after": 0.0,
                            "descent_slack": 0.0, "pg_inf": 0.0, "dy_l1": 0.0,
                            "load_pairing": 0.0})
            continue
        sp_ = states[k - 1]
        tau = cfg.dt
        lvec = load_vector(grid, cfg, material, st.t - 0.5 * tau)
        func = _IncrementalFunctional(grid, sp_, cfg, material, lvec)
        phi0, _ = func.value_grad(sp_.y)
        phi1, grad = func.value_grad(st.y)
        F_prev = sp_.grad_y
        thq_prev = sp_.theta_qp
        rate = (st.grad_y - F_prev) / tau
        xi = cst.dissipation(material, F_prev, rate, thq_prev)["xi"]
        diss_inc = tau * grid.integrate(xi)
        diss_cum += diss_inc
        dy = st.y - sp_.y
        records.append({"t": st.t, **E, "diss_inc": diss_inc, "diss_cum": diss_cum,
                        "theta_min": float(np.min(st.theta)),
                        "theta_max": float(np.max(st.theta)),
                        "mech_iters": 0, "heat_res": 0.0,
                        "Phi_before": phi0, "Phi_after": phi1,
                        "descent_slack": phi1 - phi0,
                        "pg_inf": float(np.max(np.abs(grad[grid.free_mask]))),
                        "dy_l1": float(np.sum(np.abs(dy[grid.free_mask]))),
                        "load_pairing": float(np.sum(lvec * dy))})
    return records


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _build_parser():
    ap = argparse.ArgumentParser(prog="thermovisc", description=__doc__)
    ap.add_argument("--version", action="version",
                    version=f"thermovisc {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn in (("validate", cmd_validate), ("simulate", cmd_simulate),
                     ("linearize-sweep", cmd_linearize_sweep),
                     ("diagnose", cmd_diagnose)):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="config file (defaults empty)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--eps", type=lambda s: [float(v) for v in s.split(",")],
                       default=None, help="comma-separated eps list")
        p.add_argument("--alpha", type=float, default=None)
        p.add_argument("--parallel", type=int, default=0,
                       help="process count for sweep points (default serial)")
        p.set_defaults(func=fn)
    return ap


def main(argv=None):
    ap = _build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, DomainError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
