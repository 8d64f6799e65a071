"""Run the three controllers on the bundled 39-bus case and tabulate the comparison.

    python3 scripts/run_fig3.py [--out out/fig3] [--every 10] [--t-end 70]

Writes one CSV per variant (plot-ready, see the README for columns) and
prints settle time, control cost, overshoot and final residuals.
"""
import argparse
import time
from pathlib import Path

import numpy as np

from piac.analysis import consensus_metrics, control_cost, disturbance_time
from piac.controllers import ControllerGains, optimal_dispatch
from piac.dynamics import integrate
from piac.scenario_io import builtin_ieee39, load_scenario, write_timeseries


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--out", default="out/fig3")
    ap.add_argument("--every", type=int, default=10)
    ap.add_argument("--t-end", type=float, default=70.0)
    ap.add_argument("--dt", type=float, default=1e-3)
    args = ap.parse_args()

    net, parts = builtin_ieee39()
    _, _, spec = load_scenario("scenario_fig3.json")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    print(f"{'variant':8s} {'wall s':>7s} {'settle 5%':>10s} {'cost':>8s} {'overshoot':>10s} "
          f"{'max|w| end':>11s} {'spread/l*':>10s}")
    for v in ("gbpiac", "dpiac", "mlpiac"):
        g = ControllerGains(spec.gains.k1, spec.gains.k2, spec.gains.k3, v)
        t0 = time.perf_counter()
        traj = integrate(net, parts[v], g, spec.disturbances, t_end=args.t_end, dt=args.dt,
                         record_every=args.every)
        wall = time.perf_counter() - t0
        write_timeseries(traj, out / f"fig3_{v}.csv")
        p_s = float(traj.p_s[-1])
        _, settle = consensus_metrics(traj)
        _, lam_star = optimal_dispatch(p_s, net.price)
        post = traj.times >= disturbance_time(traj)
        over = max(0.0, np.abs(traj.u_s[post]).max() - abs(p_s))
        spread = (traj.lam[-1].max() - traj.lam[-1].min()) / abs(lam_star)
        print(f"{v:8s} {wall:7.1f} {settle:10.2f} {control_cost(traj):8.4f} {over:10.2e} "
              f"{np.abs(traj.omega[-1]).max():11.2e} {spread:10.2e}")


if __name__ == "__main__":
    main()
