"""Slowest closed-loop modes of the 39-bus case from a small-signal model.

Linearizes plant and controller around the pre-disturbance operating point
(passive buses Kron-reduced, frequency-dependent buses algebraic) and prints
the eigenvalues closest to the imaginary axis for each controller, with the
factor by which such a mode decays over the 65 s after the disturbance.

    python3 scripts/slow_modes.py [--k3 10]
"""
import argparse

import numpy as np

from piac.controllers import ControllerGains, build_plan
from piac.dynamics import initial_equilibrium
from piac.netmodel import comm_laplacian
from piac.scenario_io import builtin_ieee39


def state_matrix(net, part, gains):
    plan = build_plan(gains, net, part)
    phi = initial_equilibrium(net)
    B = net.susceptance_matrix * np.cos(phi[:, None] - phi[None, :])
    Lc = np.diag(B.sum(1)) - B
    K, Pp = net.controlled_idx, net.passive_idx
    Lred = Lc[np.ix_(K, K)] - Lc[np.ix_(K, Pp)] @ np.linalg.solve(Lc[np.ix_(Pp, Pp)], Lc[np.ix_(Pp, K)])
    nk, m = K.size, plan.m
    mach = np.isin(K, net.machine_idx)
    M, D = net.inertia[K], net.damping[K]
    Wu = np.zeros((nk, m))
    Wu[np.arange(nk), plan.member] = plan.weight * gains.k2
    # states: angles (nk), machine frequencies (nk, zero rows for F buses), eta (m), xi (m)
    n = 2 * nk + 2 * m
    th, w, e, x = slice(0, nk), slice(nk, 2 * nk), slice(2 * nk, 2 * nk + m), slice(2 * nk + m, n)
    Om = np.zeros((nk, n))
    for k in range(nk):
        if mach[k]:
            Om[k, nk + k] = 1.0
        else:
            Om[k, th] = -Lred[k] / D[k]
            Om[k, x] = Wu[k] / D[k]
    A = np.zeros((n, n))
    A[th] = Om
    for k in np.flatnonzero(mach):
        A[nk + k, th] = -Lred[k] / M[k]
        A[nk + k, nk + k] = -D[k] / M[k]
        A[nk + k, x] = Wu[k] / M[k]
    S = np.zeros((m, nk))
    S[plan.member, np.arange(nk)] = 1.0
    A[e] = (S * D * plan.eta_mask) @ Om
    A[e, x] += gains.k3 * comm_laplacian(plan.partition) @ np.diag(gains.k2 * plan.alpha_area)
    A[x] = -gains.k1 * (S * M) @ Om
    A[x, e] -= gains.k1 * np.eye(m)
    A[x, x] -= gains.k2 * np.eye(m)
    keep = [i for i in range(n) if not (nk <= i < 2 * nk and not mach[i - nk])]
    return A[np.ix_(keep, keep)]


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--k1", type=float, default=0.4)
    ap.add_argument("--k2", type=float, default=1.6)
    ap.add_argument("--k3", type=float, default=10.0)
    args = ap.parse_args()
    net, parts = builtin_ieee39()
    for v in ("gbpiac", "dpiac", "mlpiac"):
        g = ControllerGains(args.k1, args.k2, args.k3, v)
        ev = np.linalg.eigvals(state_matrix(net, parts[v], g))
        ev = ev[np.abs(ev) > 1e-9]  # uniform angle shift
        slow = sorted(ev, key=lambda z: -z.real)[:3]
        print(f"{v:7s} slowest: " + ", ".join(f"{z.real:+.4f}{z.imag:+.4f}j" for z in slow)
              + f"   decay over 65 s: {np.exp(65 * slow[0].real):.1e}")


if __name__ == "__main__":
    main()
