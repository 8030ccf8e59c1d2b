"""Reproducible experiment suites with embedded tolerances and verdicts.

``run_convergence_suite`` measures order-of-convergence quantities (Gateaux
remainder, spike variations, heat refinement), the a-priori and Lipschitz
bounds and the sensitivity to the noise truncation.  ``run_optimality_suite``
covers duality residuals, gradient checks, optimizer exit stationarity, the
Hamiltonian maximum condition and seed sensitivity.
"""

import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import adjoint as adj_mod
from . import control as ctl
from .config import build_problem
from .errors import CapabilityError
from .grid import BoundaryCondition, SpaceGrid1D, TimeGrid, build_triple
from .io import write_json, write_table
from .noise import BrownianDriver, make_noise_model
from .paths import (ControlField, apriori_bound, lipschitz_probe, solve_forward, solve_linearized,
                    solve_spike_linearized, x_norm)

SCHEMA_VERSION = 1


@dataclass
class ExperimentReport:
    experiment_id: str
    config_hash: str
    seeds: list
    quantities: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    runtimes: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(self.verdicts.values())

    def as_dict(self):
        return {"schema_version": SCHEMA_VERSION, "experiment_id": self.experiment_id,
                "config_hash": self.config_hash, "seeds": list(self.seeds), "quantities": self.quantities,
                "verdicts": self.verdicts, "tolerances": self.tolerances, "passed": self.passed}


def loglog_slope(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def random_direction(spec, time_grid, seed):
    rng = np.random.default_rng(seed)
    v = ControlField.zeros(spec, time_grid)
    v.interior[...] = rng.standard_normal(v.interior.shape)
    if v.boundary is not None:
        v.boundary[...] = rng.standard_normal(v.boundary.shape)
    return v


def _regrid(u, time_grid):
    """Piecewise-constant resampling of a deterministic control onto another grid."""
    n_old = u.n_steps
    idx = np.minimum((np.arange(time_grid.n_steps) * n_old) // time_grid.n_steps, n_old - 1)
    return ControlField(u.interior[:, idx], None if u.boundary is None else u.boundary[:, idx])


# ---- individual experiments -----------------------------------------------------

def gateaux_sweep(problem, eps_list, seed=0, driver=None):
    spec, tg = problem.spec, problem.time_grid
    driver = driver or problem.driver()
    u = problem.u0
    v = random_direction(spec, tg, seed)
    base = solve_forward(spec, u, problem.x0, driver)
    z = solve_linearized(spec, base, v)
    rem = []
    for eps in eps_list:
        xe = solve_forward(spec, u + v * eps, problem.x0, driver)
        rem.append(x_norm(spec, xe.x - base.x - eps * z.z, tg.dt))
    # linear dynamics leave only round-off; the slope is then meaningless
    scale = max(eps_list) * x_norm(spec, z.z, tg.dt)
    exact = bool(max(rem) <= 1e-10 * max(scale, 1e-300))
    return {"eps": list(map(float, eps_list)), "remainder": rem,
            "slope": loglog_slope(eps_list, rem), "exact": exact}


def weak_battery(n=10):
    """Smooth deterministic test processes ``phi_l(t, xi)``."""
    out = []
    for l in range(n):
        a, b = l % 5 + 1, l // 5
        out.append(lambda t, xi, a=a, b=b: np.sin(a * np.pi * xi) * np.cos(b * np.pi * t))
    return out


def spike_sweep(problem, window_steps, n_steps, n_samples, seed):
    spec = problem.spec
    if not spec.control_independent_sigma:
        raise CapabilityError("spike variations need (A~): sigma must not depend on the control")
    tg = TimeGrid(problem.time_grid.T, n_steps)
    driver = BrownianDriver.for_noise(problem.noise, tg, n_samples, seed)
    u = _regrid(problem.u0, tg)
    v = u.copy()
    v.interior[...] += np.sin(np.pi * spec.triple.xi)
    base = solve_forward(spec, u, problem.x0, driver)
    t0 = 0.5 * tg.T
    battery = weak_battery()
    rows, dx, dz, weak = [], [], [], []
    for k in window_steps:
        eps = k * tg.dt
        r = solve_spike_linearized(spec, base, u, v, t0, eps)
        rem = (r.diagnostics["perturbed"].x - base.x - r.z) / eps
        vals = []
        for phi in battery:
            ph = np.array([phi(t / tg.T, spec.triple.xi) for t in tg.times[:-1]])
            vals.append(abs(float(np.mean(tg.dt * np.sum(spec.triple.w * rem[:, :-1] * ph, axis=(-1, -2))))))
        dx.append(r.diagnostics["state_difference_norm"])
        dz.append(r.diagnostics["z_norm"])
        weak.append(vals)
        rows.append([k, eps, dx[-1], dz[-1], max(vals)])
    eps = [k * tg.dt for k in window_steps]
    weak = np.array(weak)
    agg = weak.max(axis=1)
    order = np.argsort(eps)
    return {"eps": eps, "state_difference": dx, "z_norm": dz, "weak_max": agg.tolist(),
            "weak_all": weak.tolist(),
            "slope_state": loglog_slope(eps, dx), "slope_z": loglog_slope(eps, dz),
            "weak_monotone": bool(np.all(np.diff(agg[order]) > 0)), "rows": rows}


def heat_error(n_cells, n_steps, T):
    """Lumped L^2 error at time T of the scheme for the heat equation against
    ``exp(-pi^2 T) sin(pi xi)``."""
    from .dynamics import identity, make_porous_media
    tr = build_triple(SpaceGrid1D(n_cells), BoundaryCondition("dirichlet"), "Hminus1_pivot")
    noise = make_noise_model(tr, 1, mu=[0.0])
    spec = make_porous_media(tr, identity(), noise)
    tg = TimeGrid(T, n_steps)
    drv = BrownianDriver.for_noise(noise, tg, 1, 0)
    x0 = np.sin(np.pi * tr.xi)
    path = solve_forward(spec, ControlField.zeros(spec, tg), x0, drv)
    exact = np.exp(-np.pi ** 2 * T) * x0
    d = path.x[0, -1] - exact
    return float(np.sqrt(np.sum(tr.w * d * d)))


def heat_sweep(T, cells_for_dt, steps_for_dt, cells_for_h, steps_for_h):
    e_dt = [heat_error(cells_for_dt, n, T) for n in steps_for_dt]
    e_h = [heat_error(n, steps_for_h, T) for n in cells_for_h]
    dts = [T / n for n in steps_for_dt]
    hs = [1.0 / n for n in cells_for_h]
    return {"dt": dts, "error_dt": e_dt, "slope_dt": loglog_slope(dts, e_dt),
            "h": hs, "error_h": e_h, "slope_h": loglog_slope(hs, e_h)}


def bound_checks(problem, driver=None):
    spec = problem.spec
    driver = driver or problem.driver()
    base = solve_forward(spec, problem.u0, problem.x0, driver)
    ap = apriori_bound(spec, base)
    shift = problem.u0 + 1.0
    lp = lipschitz_probe(spec, problem.u0, shift, problem.x0, driver)
    return {"apriori_lhs": ap.lhs, "apriori_rhs": ap.rhs, "apriori_pass": ap.passed,
            "lipschitz_lhs": lp.lhs, "lipschitz_rhs": lp.rhs, "lipschitz_pass": lp.passed,
            "lipschitz_rhs_squared_form": lp.extra["rhs_squared_form"],
            "lipschitz_pass_squared_form": lp.extra["passed_squared_form"]}


def n_modes_sensitivity(cfg, modes):
    rows = []
    for k in modes:
        pb = build_problem(cfg, n_modes=k)
        path = solve_forward(pb.spec, pb.u0, pb.x0, pb.driver())
        rows.append([k, ctl.evaluate_cost(pb.cost, path)])
    return rows


def fd_gradient_check(problem, n_directions, eps, seed=0, driver=None):
    spec, tg, cost = problem.spec, problem.time_grid, problem.cost
    driver = driver or problem.driver()
    u = problem.u0
    base = solve_forward(spec, u, problem.x0, driver)
    adj = adj_mod.solve_adjoint_pathwise(spec, base, cost)
    G = ctl.gradient(cost, spec, base, adj)
    errs, route = [], []
    for i in range(n_directions):
        v = random_direction(spec, tg, seed + 1000 + i)
        Jp = ctl.evaluate_cost(cost, solve_forward(spec, u + v * eps, problem.x0, driver))
        Jm = ctl.evaluate_cost(cost, solve_forward(spec, u - v * eps, problem.x0, driver))
        fd = (Jp - Jm) / (2 * eps)
        ad = ctl.control_inner(spec, tg, G, v)
        errs.append(abs(fd - ad) / max(abs(ad), abs(fd), 1e-300))
        if i == 0:
            z = solve_linearized(spec, base, v)
            dd = ctl.directional_derivative(cost, spec, base, z, v)
            route.append(abs(dd - ad) / max(abs(ad), 1e-300))
    return {"fd_relative_errors": errs, "fd_max": max(errs), "route_relative": route[0]}


def duality_checks(problem, seed=0, driver=None):
    spec, tg, cost = problem.spec, problem.time_grid, problem.cost
    driver = driver or problem.driver()
    base = solve_forward(spec, problem.u0, problem.x0, driver)
    v = random_direction(spec, tg, seed)
    z = solve_linearized(spec, base, v)
    pw = adj_mod.check_duality(spec, base, adj_mod.solve_adjoint_pathwise(spec, base, cost), z, v, cost)
    rg = adj_mod.check_duality(spec, base, adj_mod.solve_adjoint_regression(spec, base, cost), z, v, cost)
    return {"pathwise_relative": pw.relative, "pathwise_absolute": pw.absolute,
            "regression_absolute": rg.absolute, "regression_se": rg.standard_error, "terms": pw.terms}


def optimality_at_exit(problem, tol, max_iter, driver=None, pontryagin=True, ptol=1e-4):
    spec = problem.spec
    driver = driver or problem.driver()
    st = ctl.optimize(problem.control_problem(), driver, ctl.Budget(max_iter=max_iter, tol=tol))
    res = ctl.stationarity_residual(st.u, st.grad, problem.box)
    costs = [h["cost"] for h in st.history]
    out = {"converged": st.converged, "iterations": st.iterations, "final_cost": st.cost,
           "stationarity_aggregate": res.aggregate, "stationarity_max": res.max,
           "cost_monotone": bool(np.all(np.diff(costs) <= 0)), "history": st.history, "state": st}
    if pontryagin:
        if not spec.control_independent_sigma:
            raise CapabilityError("Hamiltonian check requires (A~): sigma must not depend on the control")
        ra = adj_mod.solve_adjoint_regression(spec, st.path, problem.cost)
        rep = ctl.pontryagin_check(spec, problem.cost, st.path, ra, problem.box, tol=ptol)
        pert = problem.box.project(st.u + 0.5)
        ppath = solve_forward(spec, pert, problem.x0, driver)
        prep = ctl.pontryagin_check(spec, problem.cost, ppath,
                                    adj_mod.solve_adjoint_regression(spec, ppath, problem.cost), problem.box, tol=ptol)
        out.update({"pontryagin_violation": rep.max_violation, "pontryagin_se": rep.standard_error,
                    "pontryagin_pass": rep.passed, "pontryagin_location": rep.location,
                    "perturbed_violation": prep.max_violation, "perturbed_se": prep.standard_error,
                    "perturbed_detected": bool(prep.max_violation - 3 * prep.standard_error > 0)})
    return out


# ---- suites ----------------------------------------------------------------------

def run_convergence_suite(cfg):
    vc, tol = cfg.verify, cfg.tolerances
    problem = build_problem(cfg)
    rep = ExperimentReport("convergence", cfg.config_hash(), list(cfg.ensemble.seeds))
    rep.tolerances = {"gateaux_slope_min": tol.slope_min, "spike_slope": list(tol.spike_slope),
                      "heat_dt_slope_min": 0.9, "heat_h_slope_min": 1.9, "c1": tol.c1}

    t = time.perf_counter()
    g = gateaux_sweep(problem, vc.gateaux_eps, seed=cfg.seed)
    rep.quantities["gateaux"] = g
    rep.verdicts["gateaux_slope"] = g["exact"] or g["slope"] >= tol.slope_min
    rep.tables["gateaux"] = (["eps", "remainder"], list(zip(g["eps"], g["remainder"])))
    rep.runtimes["gateaux"] = time.perf_counter() - t

    if vc.spike:
        t = time.perf_counter()
        s = spike_sweep(problem, vc.spike_window_steps, vc.spike_n_steps, vc.spike_samples, cfg.seed)
        rows = s.pop("rows")
        rep.quantities["spike"] = s
        lo, hi = tol.spike_slope
        rep.verdicts["spike_state_slope"] = lo <= s["slope_state"] <= hi
        rep.verdicts["spike_z_slope"] = lo <= s["slope_z"] <= hi
        rep.verdicts["spike_weak_monotone"] = s["weak_monotone"]
        rep.tables["spike"] = (["window_steps", "eps", "state_difference", "z_norm", "weak_max"], rows)
        rep.runtimes["spike"] = time.perf_counter() - t

    if vc.heat:
        t = time.perf_counter()
        h = heat_sweep(vc.heat_T, vc.heat_cells_for_dt, vc.heat_steps_for_dt, vc.heat_cells_for_h,
                       vc.heat_steps_for_h)
        rep.quantities["heat"] = h
        rep.verdicts["heat_dt_slope"] = h["slope_dt"] >= 0.9
        rep.verdicts["heat_h_slope"] = h["slope_h"] >= 1.9
        rep.tables["heat_dt"] = (["dt", "error"], list(zip(h["dt"], h["error_dt"])))
        rep.tables["heat_h"] = (["h", "error"], list(zip(h["h"], h["error_h"])))
        rep.runtimes["heat"] = time.perf_counter() - t

    t = time.perf_counter()
    b = bound_checks(problem)
    rep.quantities["bounds"] = b
    rep.verdicts["apriori_bound"] = b["apriori_pass"]
    rep.verdicts["lipschitz_bound"] = b["lipschitz_pass"]
    rep.runtimes["bounds"] = time.perf_counter() - t

    if vc.n_modes_sensitivity:
        t = time.perf_counter()
        modes = [k for k in vc.n_modes_sensitivity if k <= problem.triple.m]
        rows = n_modes_sensitivity(cfg, modes)
        rep.quantities["n_modes_sensitivity"] = rows
        rep.tables["n_modes_sensitivity"] = (["n_modes", "cost"], rows)
        rep.runtimes["n_modes"] = time.perf_counter() - t
    return rep


def run_optimality_suite(cfg):
    vc, tol = cfg.verify, cfg.tolerances
    problem = build_problem(cfg)
    rep = ExperimentReport("optimality", cfg.config_hash(), list(cfg.ensemble.seeds))
    rep.tolerances = {"duality": tol.duality_tol, "fd": tol.fd_tol, "stationarity": tol.stationarity_tol,
                      "stationarity_pointwise": 1e-5, "pontryagin": tol.pontryagin_tol, "route": 1e-8}

    t = time.perf_counter()
    d = duality_checks(problem, seed=cfg.seed)
    rep.quantities["duality"] = d
    rep.verdicts["duality_pathwise"] = d["pathwise_relative"] <= tol.duality_tol
    rep.verdicts["duality_regression"] = d["regression_absolute"] <= 3 * d["regression_se"] + 1e-12
    rep.runtimes["duality"] = time.perf_counter() - t

    t = time.perf_counter()
    f = fd_gradient_check(problem, vc.fd_directions, vc.fd_eps, seed=cfg.seed)
    rep.quantities["gradient"] = f
    rep.verdicts["fd_gradient"] = f["fd_max"] <= tol.fd_tol
    rep.verdicts["gradient_routes"] = f["route_relative"] <= 1e-8
    rep.tables["fd_gradient"] = (["direction", "relative_error"], list(enumerate(f["fd_relative_errors"])))
    rep.runtimes["gradient"] = time.perf_counter() - t

    if vc.optimize:
        t = time.perf_counter()
        o = optimality_at_exit(problem, tol.stationarity_tol, tol.max_iter, pontryagin=vc.pontryagin,
                               ptol=tol.pontryagin_tol)
        o.pop("state")
        hist = o.pop("history")
        rep.quantities["optimizer"] = o
        rep.verdicts["optimizer_converged"] = o["converged"]
        rep.verdicts["stationarity"] = o["stationarity_aggregate"] <= 1e-6
        rep.verdicts["stationarity_pointwise"] = o["stationarity_max"] <= 1e-5
        rep.verdicts["cost_monotone"] = o["cost_monotone"]
        if vc.pontryagin:
            rep.verdicts["pontryagin"] = o["pontryagin_pass"]
            rep.verdicts["pontryagin_perturbed_detected"] = o["perturbed_detected"]
        rep.tables["optimizer_history"] = (["iter", "cost", "grad_norm", "stationarity", "step_length"],
                                           [[h["iter"], h["cost"], h["grad_norm"], h["stationarity"],
                                             h["step_length"]] for h in hist])
        rep.runtimes["optimizer"] = time.perf_counter() - t

    if vc.seed_sensitivity and len(cfg.ensemble.seeds) > 1:
        t = time.perf_counter()
        rows = []
        for s in cfg.ensemble.seeds:
            st = ctl.optimize(problem.control_problem(), problem.driver(seed=s),
                              ctl.Budget(max_iter=tol.max_iter, tol=tol.stationarity_tol))
            rows.append([s, st.cost, float(np.sqrt(ctl.control_inner(problem.spec, problem.time_grid, st.u, st.u)))])
        costs = np.array([r[1] for r in rows])
        rep.quantities["seed_sensitivity"] = {"rows": rows, "cost_mean": float(costs.mean()),
                                              "cost_std": float(costs.std(ddof=1))}
        rep.tables["seed_sensitivity"] = (["seed", "optimal_cost", "control_norm"], rows)
        rep.runtimes["seed_sensitivity"] = time.perf_counter() - t
    return rep


def write_report(report, out_dir):
    """JSON report plus one CSV per table; returns the written file names (runtimes
    go to a separate timings file that is not part of the deterministic output)."""
    os.makedirs(out_dir, exist_ok=True)
    names = []
    name = f"report_{report.experiment_id}.json"
    write_json(os.path.join(out_dir, name), report.as_dict())
    names.append(name)
    for key, (header, rows) in sorted(report.tables.items()):
        fname = f"{report.experiment_id}_{key}.csv"
        write_table(os.path.join(out_dir, fname), header, rows)
        names.append(fname)
    write_json(os.path.join(out_dir, f"timings_{report.experiment_id}.json"), report.runtimes)
    return names
