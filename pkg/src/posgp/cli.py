"""File-driven command line front end.

Subcommands parse a problem file (or a graph edge list for the application
commands), dispatch to the matching GP builder and solver, and emit a single
JSON report (schema ``posgp-report/1``) to stdout or ``--out``.  Exit codes:
0 optimal, 2 infeasible, 3 parse/validation error, 4 numeric failure or
iteration limit.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import __version__
from .apps import BufferNetwork, SisNetwork, build_buffer_network, build_sis_problem
from .gp import SolveOptions, SolveStatus, solve
from .probfile import ParseError, parse_problem, serialize_bundle
from .synth import (
    TradeoffFn,
    UncertaintyStructure,
    build_delay_gp,
    build_h2_gp,
    build_hankel_gp,
    build_hinf_gp,
    build_mixed_gp,
    build_robust_epsmax,
    build_robust_gp,
    build_schatten_gp,
    minimize_gamma,
)
from .sysmodel import (
    certified_decay_rate,
    certified_decay_rate_delay,
    delay_gains,
    instantiate,
    norm_report,
    robust_abscissa_estimate,
    spectral_abscissa,
)

SCHEMA = "posgp-report/1"

_EXIT_FOR_STATUS = {
    SolveStatus.OPTIMAL: 0,
    SolveStatus.INFEASIBLE: 2,
    SolveStatus.MAX_ITERS: 4,
    SolveStatus.NUMERIC_FAILURE: 4,
}

_NORM_BUILDERS = {
    "solve-h2": build_h2_gp,
    "solve-hinf": build_hinf_gp,
    "solve-hankel": build_hankel_gp,
}


class CliError(Exception):
    pass


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _build_parser():
    p = _ArgumentParser(prog="posgp", description=__doc__)
    p.add_argument("--version", action="version", version=f"posgp {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, gamma=True):
        sp.add_argument("problem", help="problem file")
        if gamma:
            sp.add_argument("--gamma", type=float, default=None,
                            help="norm/decay bound (overrides the [gamma] section)")
        sp.add_argument("--strict-margin", type=float, default=None)
        sp.add_argument("--series-order", type=int, default=None)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default=None, help="write the report to this path")

    for name in ("solve-h2", "solve-hinf", "solve-hankel"):
        common(sub.add_parser(name))
    sp = sub.add_parser("solve-schatten")
    common(sp)
    sp.add_argument("--p", type=int, default=None, help="even Schatten order")
    sp = sub.add_parser("solve-mixed")
    common(sp)
    sp = sub.add_parser("solve-robust")
    common(sp)
    sp.add_argument("--eps", type=float, default=None, help="uncertainty size bound")
    sp = sub.add_parser("solve-robust-epsmax")
    common(sp)
    sp = sub.add_parser("solve-delay")
    common(sp)

    sp = sub.add_parser("min-gamma")
    sp.add_argument("target", choices=["solve-h2", "solve-hinf", "solve-mixed",
                                       "solve-hankel", "solve-schatten", "solve-delay"])
    common(sp, gamma=False)
    sp.add_argument("--budget", type=float, default=None, help="cost budget L-bar")
    sp.add_argument("--p", type=int, default=None)
    sp.add_argument("--eps", type=float, default=None)

    sp = sub.add_parser("oracle")
    sp.add_argument("problem")
    sp.add_argument("--theta-file", default=None,
                    help="file of 'name value' lines fixing the parameters")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default=None)

    sp = sub.add_parser("sweep")
    sp.add_argument("target", choices=["solve-h2", "solve-hinf", "solve-hankel",
                                       "solve-schatten", "solve-mixed",
                                       "solve-robust", "solve-delay"])
    common(sp, gamma=False)
    sp.add_argument("--gamma-grid", required=True, metavar="A:STEP:B")
    sp.add_argument("--p", type=int, default=None)
    sp.add_argument("--eps", type=float, default=None)

    sp = sub.add_parser("buffer-net")
    sp.add_argument("graph", help="edge-list file: 'src dst [weight]' per line")
    sp.add_argument("--gamma", type=float, default=None)
    sp.add_argument("--min-gamma", action="store_true",
                    help="minimize the achievable induced-gain bound instead")
    sp.add_argument("--budget", type=float, default=None)
    sp.add_argument("--alpha", type=float, default=0.1)
    sp.add_argument("--phi-bar", type=float, default=5.0)
    sp.add_argument("--psi-bar", type=float, default=5.0)
    sp.add_argument("--strict-margin", type=float, default=None)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default=None)

    sp = sub.add_parser("sis")
    sp.add_argument("graph")
    sp.add_argument("--gamma", type=float, default=0.01)
    sp.add_argument("--eps", type=float, default=None, help="absolute uncertainty bound")
    sp.add_argument("--eps-rel", type=float, default=None,
                    help="uncertainty bound as a fraction of the adjacency norm")
    sp.add_argument("--beta-range", default="0.1:0.2", metavar="MIN:MAX")
    sp.add_argument("--delta-range", default="1:2", metavar="MIN:MAX")
    sp.add_argument("--cost-p", type=float, default=0.1)
    sp.add_argument("--cost-q", type=float, default=1.0)
    sp.add_argument("--reparametrize", action="store_true")
    sp.add_argument("--norm", choices=["robust", "h2", "hankel", "schatten"],
                    default="robust")
    sp.add_argument("--p", type=int, default=2)
    sp.add_argument("--directed", action="store_true",
                    help="treat edges as directed src->dst influence")
    sp.add_argument("--strict-margin", type=float, default=None)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default=None)
    return p


# ---------------------------------------------------------------------------
# helpers


def _solve_options(bundle_options, args):
    kw = {}
    if bundle_options.get("strict_margin") is not None:
        kw["strict_margin"] = bundle_options["strict_margin"]
    if bundle_options.get("series_order") is not None:
        kw["delay_series_order"] = bundle_options["series_order"]
    if bundle_options.get("max_iters") is not None:
        kw["max_iters"] = bundle_options["max_iters"]
    if getattr(args, "strict_margin", None) is not None:
        kw["strict_margin"] = args.strict_margin
    if getattr(args, "series_order", None) is not None:
        kw["delay_series_order"] = args.series_order
    env_iters = os.environ.get("POSGP_MAX_ITERS")
    if env_iters is not None:
        try:
            kw["max_iters"] = int(env_iters)
        except ValueError:
            raise CliError(f"POSGP_MAX_ITERS must be an integer, got {env_iters!r}")
    return SolveOptions(**kw)


def _need(value, what):
    if value is None:
        raise CliError(f"missing {what}")
    return value


def _grid(spec_str):
    parts = spec_str.split(":")
    if len(parts) != 3:
        raise CliError(f"grid must be A:STEP:B, got {spec_str!r}")
    a, step, b = (float(x) for x in parts)
    if step <= 0 or b < a:
        raise CliError(f"invalid grid {spec_str!r}")
    out = []
    x = a
    while x <= b + 1e-12 * max(1.0, abs(b)):
        out.append(round(x, 12))
        x += step
    return out


def _uncertainty(bundle, args, m):
    eps = getattr(args, "eps", None)
    if eps is None:
        eps = bundle.eps
    blocks = bundle.uncertainty_blocks or ((m,), 0)
    full, scalars = blocks
    return UncertaintyStructure(full_blocks=full, scalar_blocks=scalars, eps=eps)


def _tradeoff(bundle, kind):
    expr = _need(bundle.tradeoff, "[tradeoff] section")
    if kind == "mixed":
        return TradeoffFn(expr, nondecreasing=("g2", "ginf"))
    return TradeoffFn(expr, nondecreasing=("g1", "ginf"), nonincreasing=("rho",))


def _read_theta_file(path):
    point = {}
    with open(path, "r", encoding="utf-8") as fh:
        for ln, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise CliError(f"{path}:{ln}: expected 'name value'")
            try:
                point[parts[0]] = float(parts[1])
            except ValueError:
                raise CliError(f"{path}:{ln}: invalid value {parts[1]!r}")
    return point


def read_edge_list(path):
    """Edge-list file: 'src dst [weight]' per line, '#' comments, 0-based ids."""
    edges = []
    max_node = -1
    with open(path, "r", encoding="utf-8") as fh:
        for ln, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) not in (2, 3):
                raise CliError(f"{path}:{ln}: expected 'src dst [weight]'")
            try:
                src, dst = int(parts[0]), int(parts[1])
                w = float(parts[2]) if len(parts) == 3 else None
            except ValueError:
                raise CliError(f"{path}:{ln}: invalid edge line {line!r}")
            if src < 0 or dst < 0:
                raise CliError(f"{path}:{ln}: node ids must be nonnegative")
            edges.append((src, dst, w))
            max_node = max(max_node, src, dst)
    if not edges:
        raise CliError(f"{path}: no edges")
    return max_node + 1, edges


def _report_norms(rep):
    out = dataclasses.asdict(rep)
    if out.get("schatten"):
        out["schatten"] = {str(k): v for k, v in out["schatten"].items()}
    return out


def _oracle_section(ps, point, *, robust=None, seed=0):
    """Instantiate at a point and run every applicable oracle."""
    S = instantiate(ps, point)
    if ps.has_delay:
        lam = spectral_abscissa(S.F + S.Ad)
        sec = {"spectral_abscissa_with_delay": lam}
        if lam < 0:
            l1, linf = delay_gains(S)
            sec.update(l1_gain=l1, linf_gain=linf,
                       decay_rate_lb=certified_decay_rate_delay(S))
        return sec
    sec = _report_norms(norm_report(S))
    if robust is not None:
        U, samples = robust
        if U.eps is not None:
            sec["robust_abscissa_sampled"] = robust_abscissa_estimate(
                S, U.block_sizes(), U.eps, samples=samples, seed=seed
            )
    return sec


def _solve_report(command, bundle, problem, opts, args, extra=None, oracle_robust=None):
    res = solve(problem, opts)
    theta = aux = None
    if res.point:
        theta = {nm: res.point[nm] for nm in bundle.vars.names if nm in res.point}
        aux = {nm: v for nm, v in res.point.items() if nm.startswith("_")}
    rep = {
        "schema": SCHEMA,
        "command": command,
        "seed": args.seed,
        "status": res.status.value,
        "problem": serialize_bundle(bundle),
        "theta": theta,
        "aux": aux,
        "objective": res.objective_value,
        "cost": bundle.cost.cost_value(res.point) if res.point else None,
        "constraints": [
            {"value": v, "slack": 1.0 - v} for v in res.constraint_values
        ],
        "solver": {
            "iterations": res.iterations,
            "kkt_residual": res.kkt_residual,
            "strict_margin": opts.strict_margin,
            "max_iters": opts.max_iters,
            "infeasibility_gap": res.infeasibility_gap,
            "message": res.message,
        },
    }
    if extra:
        rep.update(extra)
    if res.status is SolveStatus.OPTIMAL:
        rep["oracle"] = _oracle_section(
            bundle.system, theta, robust=oracle_robust, seed=args.seed
        )
    return rep, _EXIT_FOR_STATUS[res.status]


def _build_for(target, bundle, args, gamma):
    """Construct the GP for a solve-* target name."""
    ps, cost, theta = bundle.system, bundle.cost, bundle.theta
    if target in _NORM_BUILDERS:
        return _NORM_BUILDERS[target](ps, cost, theta, gamma), None
    if target == "solve-schatten":
        p = getattr(args, "p", None) or bundle.schatten_p
        p = _need(p, "Schatten order (--p or [p])")
        return build_schatten_gp(ps, cost, theta, p, gamma), None
    if target == "solve-mixed":
        return build_mixed_gp(ps, cost, theta, _tradeoff(bundle, "mixed"), gamma), None
    if target == "solve-delay":
        return build_delay_gp(ps, cost, theta, _tradeoff(bundle, "delay"), gamma), None
    if target == "solve-robust":
        U = _uncertainty(bundle, args, ps.nw)
        if U.eps is None:
            raise CliError("missing uncertainty size (--eps or [eps])")
        return build_robust_gp(ps, cost, theta, U, gamma), U
    raise CliError(f"unknown target {target!r}")


# ---------------------------------------------------------------------------
# subcommand drivers


def _cmd_solve(args):
    bundle = parse_problem(args.problem)
    opts = _solve_options(bundle.options, args)
    if args.command == "solve-robust-epsmax":
        gamma = _need(args.gamma if args.gamma is not None else bundle.gamma,
                      "gamma (--gamma or [gamma])")
        U = _uncertainty(bundle, args, bundle.system.nw)
        U = UncertaintyStructure(U.full_blocks, U.scalar_blocks, None)
        problem = build_robust_epsmax(bundle.system, bundle.theta, U, gamma)
        rep, code = _solve_report(args.command, bundle, problem, opts, args,
                                  extra={"gamma": gamma})
        if rep.get("aux") and "_eps" in rep["aux"]:
            rep["eps_max"] = rep["aux"]["_eps"]
            if rep["status"] == "optimal":
                U_star = UncertaintyStructure(U.full_blocks, U.scalar_blocks,
                                              rep["eps_max"])
                rep["oracle"] = _oracle_section(
                    bundle.system, rep["theta"],
                    robust=(U_star, 2000), seed=args.seed,
                )
        return rep, code
    gamma = _need(args.gamma if args.gamma is not None else bundle.gamma,
                  "gamma (--gamma or [gamma])")
    problem, U = _build_for(args.command, bundle, args, gamma)
    oracle_robust = (U, 2000) if U is not None else None
    return _solve_report(args.command, bundle, problem, opts, args,
                         extra={"gamma": gamma}, oracle_robust=oracle_robust)


_MIN_GAMMA_BUILDERS = {
    "solve-h2": build_h2_gp,
    "solve-hinf": build_hinf_gp,
    "solve-hankel": build_hankel_gp,
}


def _cmd_min_gamma(args):
    bundle = parse_problem(args.problem)
    opts = _solve_options(bundle.options, args)
    ps, cost, theta = bundle.system, bundle.cost, bundle.theta
    kwargs = {}
    if args.target in _MIN_GAMMA_BUILDERS:
        builder = _MIN_GAMMA_BUILDERS[args.target]
    elif args.target == "solve-schatten":
        builder = build_schatten_gp
        kwargs["p"] = _need(args.p or bundle.schatten_p, "Schatten order (--p or [p])")
    elif args.target == "solve-mixed":
        builder = build_mixed_gp
        kwargs["alpha"] = _tradeoff(bundle, "mixed")
    else:
        builder = build_delay_gp
        kwargs["beta"] = _tradeoff(bundle, "delay")
    mg = minimize_gamma(builder, ps, cost, theta, budget=args.budget, opts=opts, **kwargs)
    res = mg.result
    rep = {
        "schema": SCHEMA,
        "command": f"min-gamma {args.target}",
        "seed": args.seed,
        "status": res.status.value,
        "problem": serialize_bundle(bundle),
        "gamma_min": mg.gamma,
        "budget": args.budget,
        "theta": mg.theta,
        "aux": {nm: v for nm, v in res.point.items() if nm.startswith("_")} if res.point else None,
        "cost": bundle.cost.cost_value(res.point) if res.point else None,
        "solver": {
            "iterations": res.iterations,
            "kkt_residual": res.kkt_residual,
            "strict_margin": opts.strict_margin,
            "max_iters": opts.max_iters,
            "infeasibility_gap": res.infeasibility_gap,
            "message": res.message,
        },
    }
    if mg.gamma is not None:
        rep["oracle"] = _oracle_section(ps, mg.theta, seed=args.seed)
    return rep, _EXIT_FOR_STATUS[res.status]


def _cmd_oracle(args):
    bundle = parse_problem(args.problem)
    point = _read_theta_file(args.theta_file) if args.theta_file else {}
    missing = [nm for nm in bundle.vars.names if nm not in point]
    if missing:
        raise CliError(f"theta file misses variables: {missing}")
    rep = {
        "schema": SCHEMA,
        "command": "oracle",
        "seed": args.seed,
        "status": "optimal",
        "problem": serialize_bundle(bundle),
        "theta": {nm: point[nm] for nm in bundle.vars.names},
        "oracle": _oracle_section(bundle.system, point, seed=args.seed),
    }
    return rep, 0


def _cmd_sweep(args):
    bundle = parse_problem(args.problem)
    opts = _solve_options(bundle.options, args)
    grid = _grid(args.gamma_grid)
    records = []
    worst = 0
    for gamma in grid:
        problem, U = _build_for(args.target, bundle, args, gamma)
        res = solve(problem, opts)
        rec = {
            "gamma": gamma,
            "status": res.status.value,
            "objective": res.objective_value,
            "cost": bundle.cost.cost_value(res.point) if res.point else None,
            "theta": {nm: res.point[nm] for nm in bundle.vars.names} if res.point else None,
            "iterations": res.iterations,
        }
        if res.status is SolveStatus.OPTIMAL:
            rec["oracle"] = _oracle_section(
                bundle.system, rec["theta"],
                robust=(U, 2000) if U is not None else None, seed=args.seed,
            )
        records.append(rec)
        worst = max(worst, _EXIT_FOR_STATUS[res.status])
    rep = {
        "schema": SCHEMA,
        "command": f"sweep {args.target}",
        "seed": args.seed,
        "status": "sweep",
        "problem": serialize_bundle(bundle),
        "grid": grid,
        "sweep": records,
    }
    any_opt = any(r["status"] == "optimal" for r in records)
    return rep, 0 if any_opt else worst


def _cmd_buffer_net(args):
    n, edges = read_edge_list(args.graph)
    bn = BufferNetwork(n, edges, alpha=args.alpha,
                       phi_bar=args.phi_bar, psi_bar=args.psi_bar)
    bp = build_buffer_network(bn)
    opts = _solve_options({}, args)
    rep = {
        "schema": SCHEMA,
        "command": "buffer-net",
        "seed": args.seed,
        "origins": bp.origins,
        "destinations": bp.destinations,
        "edges": [[s, d, w] for s, d, w in bp.resolved_edges],
        "warnings": bp.warnings,
    }
    if args.min_gamma or args.gamma is None:
        mg = minimize_gamma(build_hinf_gp, bp.system, bp.cost, bp.theta,
                            budget=args.budget, opts=opts)
        res = mg.result
        rep.update(
            status=res.status.value,
            gamma_min=mg.gamma,
            theta=mg.theta,
            cost=bp.cost.cost_value(res.point) if res.point else None,
            solver={"iterations": res.iterations, "message": res.message},
        )
        if mg.gamma is not None:
            rep["oracle"] = _oracle_section(bp.system, mg.theta, seed=args.seed)
        return rep, _EXIT_FOR_STATUS[res.status]
    problem = build_hinf_gp(bp.system, bp.cost, bp.theta, args.gamma)
    res = solve(problem, opts)
    theta = {nm: res.point[nm] for nm in bp.system.vars.names} if res.point else None
    rep.update(
        status=res.status.value,
        gamma=args.gamma,
        theta=theta,
        cost=bp.cost.cost_value(res.point) if res.point else None,
        solver={"iterations": res.iterations, "message": res.message},
    )
    if res.status is SolveStatus.OPTIMAL:
        rep["oracle"] = _oracle_section(bp.system, theta, seed=args.seed)
    return rep, _EXIT_FOR_STATUS[res.status]


def _parse_range(text, what):
    parts = text.split(":")
    if len(parts) != 2:
        raise CliError(f"{what} must be MIN:MAX, got {text!r}")
    lo, hi = float(parts[0]), float(parts[1])
    return lo, hi


def _cmd_sis(args):
    n, edges = read_edge_list(args.graph)
    A = np.zeros((n, n))
    for src, dst, w in edges:
        weight = 1.0 if w is None else w
        A[dst, src] = weight
        if not args.directed:
            A[src, dst] = weight
    norm_a = float(np.linalg.norm(A, 2))
    if args.eps is not None and args.eps_rel is not None:
        raise CliError("give either --eps or --eps-rel, not both")
    eps = args.eps if args.eps is not None else (
        (args.eps_rel * norm_a) if args.eps_rel is not None else 0.0
    )
    beta_min, beta_max = _parse_range(args.beta_range, "--beta-range")
    delta_min, delta_max = _parse_range(args.delta_range, "--delta-range")
    sn = SisNetwork(A, eps=eps, beta_min=beta_min, beta_max=beta_max,
                    delta_min=delta_min, delta_max=delta_max,
                    cost_p=args.cost_p, cost_q=args.cost_q, gamma=args.gamma)
    need_reparam = args.norm in ("h2", "hankel", "schatten")
    sp = build_sis_problem(sn, reparametrize=args.reparametrize or need_reparam)
    opts = _solve_options({}, args)
    if args.norm == "robust":
        problem = build_robust_gp(sp.system, sp.cost, sp.theta, sp.uncertainty, args.gamma)
    elif args.norm == "h2":
        problem = build_h2_gp(sp.system, sp.cost, sp.theta, args.gamma)
    elif args.norm == "hankel":
        problem = build_hankel_gp(sp.system, sp.cost, sp.theta, args.gamma)
    else:
        problem = build_schatten_gp(sp.system, sp.cost, sp.theta, args.p, args.gamma)
    res = solve(problem, opts)
    theta = {nm: res.point[nm] for nm in sp.system.vars.names} if res.point else None
    rep = {
        "schema": SCHEMA,
        "command": "sis",
        "seed": args.seed,
        "status": res.status.value,
        "n_nodes": n,
        "adjacency_norm": norm_a,
        "eps": eps,
        "gamma": args.gamma,
        "norm": args.norm,
        "reparametrized": sp.reparametrized,
        "theta": theta,
        "cost": sp.cost.cost_value(res.point) if res.point else None,
        "solver": {"iterations": res.iterations, "message": res.message},
    }
    if res.status is SolveStatus.OPTIMAL:
        rep["investments"] = sp.investment_table(theta)
        robust = (sp.uncertainty, 2000) if args.norm == "robust" and eps > 0 else None
        rep["oracle"] = _oracle_section(sp.system, theta, robust=robust, seed=args.seed)
        if args.norm == "robust":
            S = instantiate(sp.system, theta)
            rep["oracle"]["certified_decay"] = certified_decay_rate(S.F)
    return rep, _EXIT_FOR_STATUS[res.status]


# ---------------------------------------------------------------------------


def _emit(rep, out_path):
    text = json.dumps(rep, indent=2, sort_keys=False)
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command in ("solve-h2", "solve-hinf", "solve-mixed", "solve-hankel",
                            "solve-schatten", "solve-robust", "solve-robust-epsmax",
                            "solve-delay"):
            rep, code = _cmd_solve(args)
        elif args.command == "min-gamma":
            rep, code = _cmd_min_gamma(args)
        elif args.command == "oracle":
            rep, code = _cmd_oracle(args)
        elif args.command == "sweep":
            rep, code = _cmd_sweep(args)
        elif args.command == "buffer-net":
            rep, code = _cmd_buffer_net(args)
        else:
            rep, code = _cmd_sis(args)
    except (CliError, ParseError, ValueError, KeyError, OSError) as exc:
        sys.stderr.write(f"posgp: error: {exc}\n")
        return 3
    except ArithmeticError as exc:
        sys.stderr.write(f"posgp: numeric failure: {exc}\n")
        return 4
    _emit(rep, args.out)
    return code


if __name__ == "__main__":
    sys.exit(main())
