"""Command line interface.

    monospde validate --config problem.toml
    monospde solve    --config problem.toml --out DIR [--seed N] [--samples N]
    monospde optimize --config problem.toml --out DIR
    monospde verify   --config problem.toml --out DIR

``solve`` writes ``state.csv`` and ``adjoint_p.csv`` (columns sample, step,
node, value), ``paths.npz`` with x, p, p_stage and q (q has shape sample, step,
channel, node) and ``summary.json``.  ``optimize`` writes ``history.csv``
(iter, cost, grad_norm, stationarity, step_length), ``control_interior.csv`` /
``control_boundary.csv`` and ``summary.json``.  ``verify`` writes one JSON
report and CSV tables per suite.  Every command that writes files also writes
a MANIFEST with the config hash, library versions, seeds and file digests.

Exit codes: 0 success, 1 failed hypothesis or verdict, 2 invalid configuration,
3 capability error, 4 I/O or solver failure.
"""

import argparse
import os
import sys

import numpy as np
from pydantic import ValidationError

from . import adjoint, control, io
from .config import build_problem, load_config, mu_sequence, with_overrides
from .dynamics import validate_hypotheses
from .errors import CapabilityError, ConfigurationError, NumericalError, OptimizerError, SolverError
from .noise import validate_summability
from .paths import solve_forward


def _print(msg):
    print(msg, flush=True)


def cmd_validate(cfg):
    pb = build_problem(cfg)
    spec = pb.spec
    vc = cfg.validation
    rep = validate_hypotheses(spec, tuple(vc.state_range), vc.count, cfg.seed, pb.box)
    ok = True
    for c in rep.checks:
        if c.name == "A~":
            continue
        ok &= c.passed
        _print(f"({c.name}) {'PASS' if c.passed else 'FAIL'} observed={c.observed:.6g} declared={c.declared:.6g}")
    weyl = lambda k: (np.pi * np.asarray(k, float)) ** 2
    mu = mu_sequence(cfg.noise)
    labels = {"H2": "(d-1)/2", "H7": "(d+1)/2"}
    needed = "H7" if cfg.dynamics.family == "porous_media" else "H2"
    for lab, ek in labels.items():
        s = validate_summability(mu, weyl, vc.dimension, ek)
        _print(f"({lab}) {'PASS' if s.passed else 'FAIL'} last_window_ratio={s.ratios[-1]:.6g} "
               f"tail_estimate={s.tail_estimate:.6g}{'' if lab == needed else ' (informational)'}")
        if lab == needed:
            ok &= s.passed
    cr = control.validate_cost(pb.cost, pb.triple, tuple(vc.state_range), seed=cfg.seed)
    _print(f"(A3/A4) {'PASS' if cr['passed'] else 'FAIL'} growth_ratio={cr['observed_ratio']:.6g}")
    ok &= cr["passed"]
    tilde = spec.control_independent_sigma
    _print(f"(A~) {'holds' if tilde else 'fails: sigma depends on the boundary control'}")
    if cfg.verify.pontryagin and not tilde:
        raise CapabilityError("(A~) fails (gamma != 0), so the requested Pontryagin check is unavailable")
    return 0 if ok else 1


def cmd_solve(cfg, out):
    pb = build_problem(cfg)
    os.makedirs(out, exist_ok=True)
    driver = pb.driver()
    path = solve_forward(pb.spec, pb.u0, pb.x0, driver, newton_tol=cfg.tolerances.newton_tol)
    adj = adjoint.solve_adjoint_pathwise(pb.spec, path, pb.cost)
    io.write_ensemble_csv(os.path.join(out, "state.csv"), path.x)
    io.write_ensemble_csv(os.path.join(out, "adjoint_p.csv"), adj.p)
    io.write_npz(os.path.join(out, "paths.npz"), x=path.x, p=adj.p, p_stage=adj.p_stage, q=adj.q,
                 times=pb.time_grid.times, nodes=pb.triple.xi)
    J = control.evaluate_cost(pb.cost, path)
    io.write_json(os.path.join(out, "summary.json"), {"cost": J, "config_hash": cfg.config_hash(),
                                                      "newton_iterations": path.newton_iterations})
    io.write_manifest(out, cfg, ["state.csv", "adjoint_p.csv", "paths.npz", "summary.json"], "solve")
    _print(f"cost {J!r}; wrote {out}")
    return 0


def cmd_optimize(cfg, out):
    pb = build_problem(cfg)
    os.makedirs(out, exist_ok=True)
    tol = cfg.tolerances
    st = control.optimize(pb.control_problem(), pb.driver(), control.Budget(max_iter=tol.max_iter,
                                                                            tol=tol.stationarity_tol))
    io.write_table(os.path.join(out, "history.csv"), ["iter", "cost", "grad_norm", "stationarity", "step_length"],
                   [[h["iter"], h["cost"], h["grad_norm"], h["stationarity"], h["step_length"]]
                    for h in st.history])
    files = ["history.csv", "control_interior.csv", "summary.json"]
    io.write_ensemble_csv(os.path.join(out, "control_interior.csv"), st.u.interior)
    if st.u.boundary is not None:
        io.write_ensemble_csv(os.path.join(out, "control_boundary.csv"), st.u.boundary,
                              ("sample", "step", "side"))
        files.append("control_boundary.csv")
    res = control.stationarity_residual(st.u, st.grad, pb.box)
    summary = {"converged": st.converged, "iterations": st.iterations, "final_cost": st.cost,
               "stationarity": res.aggregate, "stationarity_max": res.max, "config_hash": cfg.config_hash()}
    io.write_json(os.path.join(out, "summary.json"), summary)
    io.write_manifest(out, cfg, files, "optimize")
    _print(f"converged={st.converged} iterations={st.iterations} cost={st.cost!r} "
           f"stationarity={res.aggregate:.3e} (max {res.max:.3e})")
    return 0 if st.converged else 1


def cmd_verify(cfg, out):
    from .verification import run_convergence_suite, run_optimality_suite, write_report
    os.makedirs(out, exist_ok=True)
    files = []
    ok = True
    runners = {"convergence": run_convergence_suite, "optimality": run_optimality_suite}
    for name in cfg.verify.suites:
        rep = runners[name](cfg)
        files += write_report(rep, out)
        for k, v in rep.verdicts.items():
            _print(f"[{name}] {k}: {'PASS' if v else 'FAIL'}")
        ok &= rep.passed
    io.write_manifest(out, cfg, files, "verify")
    return 0 if ok else 1


def build_parser():
    p = argparse.ArgumentParser(prog="monospde", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("validate", "solve", "optimize", "verify"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="TOML problem configuration")
        if name != "validate":
            sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override the first ensemble seed")
        sp.add_argument("--samples", type=int, default=None, help="override the ensemble size")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = with_overrides(load_config(args.config), args.seed, args.samples)
    except (ValidationError, ValueError, OSError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "validate":
            return cmd_validate(cfg)
        return {"solve": cmd_solve, "optimize": cmd_optimize, "verify": cmd_verify}[args.command](cfg, args.out)
    except CapabilityError as exc:
        print(f"capability error: {exc}", file=sys.stderr)
        return 3
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, NumericalError, OptimizerError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
