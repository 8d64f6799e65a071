"""Command-line front end.

    piac run --scenario scenario_fig3.json --variant mlpiac --out out/
    piac compare --variants gbpiac dpiac mlpiac
    piac check --variant dpiac
    piac decompose --scenario five_node.json
    piac dispatch --ps -1.98

Exit codes: 0 ok, 1 usage, 2 solver failure, 3 check failed.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis
from .controllers import ControllerGains, Variant, optimal_dispatch, us_eigenvalues
from .dynamics import NoSecureEquilibrium, SimulationError, integrate
from .netmodel import NetworkError
from .scenario_io import (
    ScenarioError,
    ScenarioSpec,
    generate_prices,
    load_scenario,
    network_from_dict,
    network_to_dict,
    partition_for,
    write_timeseries,
)

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_CHECK = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def _emit(report, path: Path | None = None):
    text = json.dumps(_clean(report), indent=2, sort_keys=True)
    print(text)
    if path is not None:
        path.write_text(text + "\n")


def _setup(args, variant: str | None = None):
    """Load the scenario and apply command-line overrides."""
    net, _, spec = load_scenario(args.scenario, variant=variant or args.variant)
    if args.seed is not None and args.seed != spec.seed:
        raw = network_to_dict(net)
        for node in raw["nodes"]:
            node["price"] = None
        net = generate_prices(network_from_dict(raw), args.seed)
        spec = replace(spec, seed=args.seed)
    g = spec.gains
    try:
        gains = ControllerGains(
            args.k1 if args.k1 is not None else g.k1,
            args.k2 if args.k2 is not None else g.k2,
            args.k3 if args.k3 is not None else g.k3,
            g.variant,
            args.eta_sum or g.eta_sum,
        )
        spec = ScenarioSpec(
            gains=gains, disturbances=spec.disturbances,
            t_end=args.t_end if args.t_end is not None else spec.t_end,
            dt=args.dt if args.dt is not None else spec.dt,
            seed=spec.seed, outputs=spec.outputs, partitions=spec.partitions, name=spec.name,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    part = partition_for(net, spec)
    return net, part, spec


def _simulate(net, part, spec, args):
    traj = integrate(net, part, spec.gains, spec.disturbances, t_end=spec.t_end, dt=spec.dt,
                     record_every=args.every)
    p_s = float(traj.p_s[-1])
    post = traj.times >= analysis.disturbance_time(traj)
    _, settle = analysis.consensus_metrics(traj, eps=0.05)
    u_star, lam_star = optimal_dispatch(p_s, net.price)
    eq = analysis.verify_equilibrium(traj.final_state(), net, traj.partition, spec.gains, p_s=p_s)
    summary = {
        "scenario": spec.name,
        "variant": spec.variant.value,
        "gains": {"k1": spec.gains.k1, "k2": spec.gains.k2, "k3": spec.gains.k3},
        "t_end": spec.t_end,
        "dt": spec.dt,
        "p_s": p_s,
        "final_omega_max_pu": float(np.abs(traj.omega[-1]).max()),
        "u_s_final": float(traj.u_s[-1]),
        "imbalance_residual": float(abs(traj.u_s[-1] + p_s)),
        "max_us_overshoot": float(max(0.0, np.abs(traj.u_s[post]).max() - abs(p_s))),
        "lambda_star": lam_star,
        "final_marginal_spread": float(traj.lam[-1].max() - traj.lam[-1].min()),
        "consensus_settle_5pct": settle,
        "control_cost": analysis.control_cost(traj),
        "max_dispatch_error": float(np.abs(traj.u[-1] - u_star).max()),
        "equilibrium": eq,
    }
    return traj, summary


def cmd_run(args) -> int:
    net, part, spec = _setup(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{spec.name or 'run'}_{spec.variant.value}"
    try:
        traj, summary = _simulate(net, part, spec, args)
    except SimulationError as exc:
        if exc.trajectory is not None and len(exc.trajectory):
            write_timeseries(exc.trajectory, out / f"{stem}_partial.{args.format}", args.format, spec.outputs)
        _emit({"error": str(exc), "variant": spec.variant.value})
        return EXIT_SOLVER
    write_timeseries(traj, out / f"{stem}.{args.format}", args.format, spec.outputs)
    _emit(summary, out / f"{stem}_summary.json")
    return EXIT_OK


def cmd_compare(args) -> int:
    if not args.variants:
        raise UsageError("compare needs at least one variant")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = {}
    for k, v in enumerate(args.variants):
        net, part, spec = _setup(args, variant=v)
        key = v if v not in rows else f"{v}#{k}"
        try:
            traj, summary = _simulate(net, part, spec, args)
        except SimulationError as exc:
            _emit({"error": str(exc), "variant": v})
            return EXIT_SOLVER
        write_timeseries(traj, out / f"{spec.name or 'run'}_{key.replace('#', '_')}.{args.format}",
                         args.format, spec.outputs)
        rows[key] = {k2: summary[k2] for k2 in ("consensus_settle_5pct", "control_cost", "max_us_overshoot",
                                                "final_omega_max_pu", "final_marginal_spread")}
    _emit({"variants": rows}, out / "comparison.json")
    return EXIT_OK


def cmd_check(args) -> int:
    net, part, spec = _setup(args)
    decomp = analysis.decompose_partition(net, part) if part.m > 1 else None
    rep = analysis.check_gain_condition(spec.gains, net, part, decomp, form=args.form)
    if args.alpha_d_min is not None or args.alpha_d_max is not None:
        lo = args.alpha_d_min if args.alpha_d_min is not None else rep.alpha_d_min
        hi = args.alpha_d_max if args.alpha_d_max is not None else rep.alpha_d_max
        req = analysis.gain_condition_bound(lo, hi, spec.gains.k3, rep.lambda_min, args.form)
        rep = analysis.GainReport(bool(rep.ratio > req), rep.ratio, req, rep.ratio / req, lo, hi,
                                  rep.lambda_min, args.form)
    mu1, mu2, flag = us_eigenvalues(spec.gains)
    report = {"variant": spec.variant.value, "gain_condition": rep.as_dict(),
              "us_eigenvalues": [mu1, mu2], "no_overshoot": flag}
    _emit(report)
    return EXIT_OK if rep.satisfied else EXIT_CHECK


def cmd_decompose(args) -> int:
    net, part, spec = _setup(args)
    d = analysis.decompose_partition(net, part)
    from .netmodel import area_prices, comm_laplacian
    L, a = comm_laplacian(part), area_prices(part, net)
    _emit({"variant": spec.variant.value, "areas": list(part.area_ids), "alpha_R": a,
           "eigenvalues": d.eigenvalues, "lambda_min": d.lambda_min, "Q": d.Q,
           "residuals": analysis.decomposition_residuals(d, L, a)})
    return EXIT_OK


def cmd_dispatch(args) -> int:
    net, _, spec = _setup(args)
    if args.ps is None:
        p_s = float(net.injection.sum()) + sum(d.delta_P for d in spec.disturbances)
    else:
        p_s = args.ps
    u, lam = optimal_dispatch(p_s, net.price)
    _emit({"p_s": p_s, "lambda_star": lam,
           "dispatch": [{"node": int(i), "alpha": float(a), "u": float(x)}
                        for i, a, x in zip(net.controlled_ids, net.price, u)]})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--scenario", default="scenario_fig3.json",
                        help="scenario JSON (bundled files are found by name)")
    common.add_argument("--variant", choices=[v.value for v in Variant])
    common.add_argument("--k1", type=float)
    common.add_argument("--k2", type=float)
    common.add_argument("--k3", type=float)
    common.add_argument("--dt", type=float)
    common.add_argument("--t-end", type=float)
    common.add_argument("--seed", type=int)
    common.add_argument("--eta-sum", choices=["MF", "F"])
    common.add_argument("--out", default="out")
    common.add_argument("--format", choices=["csv", "json"], default="csv")
    common.add_argument("--every", type=int, default=1, help="record every n-th step")

    p = _Parser(prog="piac", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="cmd", parser_class=_Parser)
    sub.required = True
    sub.add_parser("run", parents=[common]).set_defaults(func=cmd_run)
    c = sub.add_parser("compare", parents=[common])
    c.add_argument("--variants", nargs="*", default=[v.value for v in Variant],
                   choices=[v.value for v in Variant])
    c.set_defaults(func=cmd_compare)
    k = sub.add_parser("check", parents=[common])
    k.add_argument("--form", choices=["proof", "reported"], default="proof")
    k.add_argument("--alpha-d-min", type=float)
    k.add_argument("--alpha-d-max", type=float)
    k.set_defaults(func=cmd_check)
    sub.add_parser("decompose", parents=[common]).set_defaults(func=cmd_decompose)
    d = sub.add_parser("dispatch", parents=[common])
    d.add_argument("--ps", type=float)
    d.set_defaults(func=cmd_dispatch)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.every < 1:
            raise UsageError("--every must be >= 1")
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ScenarioError, NetworkError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NoSecureEquilibrium as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
