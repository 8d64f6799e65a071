"""Build the bundled 39-bus / 10-machine network file.

Runs an AC Newton-Raphson load flow on the standard New England line data to
get bus voltage magnitudes, then folds them into lossless effective
susceptances B_ij = V_i V_j / x_ij.  Each generator gets its own internal
machine node behind its transient reactance.  Output: src/piac/data/ieee39.json

    python3 scripts/build_ieee39.py
"""
import json
from pathlib import Path

import numpy as np

BASE = 100.0
F_NOMINAL = 60.0
DROOP = 70.0

# fbus tbus r x b tap (0 = none)
BRANCHES = [
    (1, 2, .0035, .0411, .6987, 0), (1, 39, .001, .025, .75, 0), (2, 3, .0013, .0151, .2572, 0),
    (2, 25, .007, .0086, .146, 0), (2, 30, 0, .0181, 0, 1.025), (3, 4, .0013, .0213, .2214, 0),
    (3, 18, .0011, .0133, .2138, 0), (4, 5, .0008, .0128, .1342, 0), (4, 14, .0008, .0129, .1382, 0),
    (5, 6, .0002, .0026, .0434, 0), (5, 8, .0008, .0112, .1476, 0), (6, 7, .0006, .0092, .113, 0),
    (6, 11, .0007, .0082, .1389, 0), (6, 31, 0, .025, 0, 1.07), (7, 8, .0004, .0046, .078, 0),
    (8, 9, .0023, .0363, .3804, 0), (9, 39, .001, .025, 1.2, 0), (10, 11, .0004, .0043, .0729, 0),
    (10, 13, .0004, .0043, .0729, 0), (10, 32, 0, .02, 0, 1.07), (12, 11, .0016, .0435, 0, 1.006),
    (12, 13, .0016, .0435, 0, 1.006), (13, 14, .0009, .0101, .1723, 0), (14, 15, .0018, .0217, .366, 0),
    (15, 16, .0009, .0094, .171, 0), (16, 17, .0007, .0089, .1342, 0), (16, 19, .0016, .0195, .304, 0),
    (16, 21, .0008, .0135, .2548, 0), (16, 24, .0003, .0059, .068, 0), (17, 18, .0007, .0082, .1319, 0),
    (17, 27, .0013, .0173, .3216, 0), (19, 20, .0007, .0138, 0, 1.06), (19, 33, .0007, .0142, 0, 1.07),
    (20, 34, .0009, .018, 0, 1.009), (21, 22, .0008, .014, .2565, 0), (22, 23, .0006, .0096, .1846, 0),
    (22, 35, 0, .0143, 0, 1.025), (23, 24, .0022, .035, .361, 0), (23, 36, .0005, .0272, 0, 1.0),
    (25, 26, .0032, .0323, .513, 0), (25, 37, .0006, .0232, 0, 1.025), (26, 27, .0014, .0147, .2396, 0),
    (26, 28, .0043, .0474, .7802, 0), (26, 29, .0057, .0625, 1.029, 0), (28, 29, .0014, .0151, .249, 0),
    (29, 38, .0008, .0156, 0, 1.025),
]

LOAD_P = {3: 322, 4: 500, 7: 233.8, 8: 522, 12: 7.5, 15: 320, 16: 329, 18: 158, 20: 628, 21: 274,
          23: 247.5, 24: 308.6, 25: 224, 26: 139, 27: 281, 28: 206, 29: 283.5, 31: 9.2, 39: 1104}
LOAD_Q = {3: 2.4, 4: 184, 7: 84, 8: 176, 12: 88, 15: 153, 16: 32.3, 18: 30, 20: 103, 21: 115,
          23: 84.6, 24: -92, 25: 47.2, 26: 17, 27: 75.5, 28: 27.6, 29: 26.9, 31: 4.6, 39: 250}

# terminal bus: (Pg MW, Vset, H [s, system base], x'd [pu, system base]); bus 31 is the slack
GENERATORS = {
    30: (250, 1.0499, 42.0, .031), 31: (None, 0.982, 30.3, .0697), 32: (650, 0.9841, 35.8, .0531),
    33: (632, 0.9972, 28.6, .0436), 34: (508, 1.0123, 26.0, .132), 35: (650, 1.0494, 34.8, .05),
    36: (560, 1.0636, 26.4, .049), 37: (540, 1.0275, 24.3, .057), 38: (830, 1.0265, 34.5, .057),
    39: (1000, 1.03, 500.0, .006),
}
SLACK = 31
NBUS = 39


def ybus():
    Y = np.zeros((NBUS, NBUS), dtype=complex)
    for f, t, r, x, b, tap in BRANCHES:
        f, t = f - 1, t - 1
        ys = 1.0 / complex(r, x)
        a = tap if tap else 1.0
        Y[f, f] += (ys + 0.5j * b) / (a * a)
        Y[t, t] += ys + 0.5j * b
        Y[f, t] -= ys / a
        Y[t, f] -= ys / a
    return Y


def load_flow(tol=1e-12, maxit=30):
    Y = ybus()
    P = np.zeros(NBUS)
    Q = np.zeros(NBUS)
    for k, v in LOAD_P.items():
        P[k - 1] -= v / BASE
    for k, v in LOAD_Q.items():
        Q[k - 1] -= v / BASE
    V = np.ones(NBUS)
    pv = []
    for bus, (pg, vset, _, _) in GENERATORS.items():
        V[bus - 1] = vset
        if pg is not None:
            P[bus - 1] += pg / BASE
        if bus != SLACK:
            pv.append(bus - 1)
    th = np.zeros(NBUS)
    pq = [k for k in range(NBUS) if k not in pv and k != SLACK - 1]
    pvpq = sorted(pv + pq)
    for _ in range(maxit):
        Vc = V * np.exp(1j * th)
        S = Vc * np.conj(Y @ Vc)
        mis = np.r_[S.real[pvpq] - P[pvpq], S.imag[pq] - Q[pq]]
        if np.abs(mis).max() < tol:
            break
        # dS/dtheta and dS/d|V| in polar form
        Ibus = Y @ Vc
        dS_dth = 1j * np.diag(Vc) @ np.conj(np.diag(Ibus) - Y @ np.diag(Vc))
        dS_dV = np.diag(Vc) @ np.conj(Y @ np.diag(Vc / V)) + np.diag(Vc / V) @ np.conj(np.diag(Ibus))
        J = np.block([
            [dS_dth.real[np.ix_(pvpq, pvpq)], dS_dV.real[np.ix_(pvpq, pq)]],
            [dS_dth.imag[np.ix_(pq, pvpq)], dS_dV.imag[np.ix_(pq, pq)]],
        ])
        dx = np.linalg.solve(J, -mis)
        th[pvpq] += dx[:len(pvpq)]
        V[pq] += dx[len(pvpq):]
    else:
        raise RuntimeError("load flow did not converge")
    return V, th


def build():
    V, _ = load_flow()
    nodes = []
    for bus in range(1, NBUS + 1):
        pd = LOAD_P.get(bus, 0.0) / BASE
        if bus < 30:
            nodes.append({"id": bus, "kind": "freq_dependent", "inertia": 0.0, "damping": DROOP,
                          "injection": -pd})
        else:
            nodes.append({"id": bus, "kind": "passive", "inertia": 0.0, "damping": 0.0,
                          "injection": -pd})
    total_load = sum(LOAD_P.values()) / BASE
    scheduled = sum(pg for pg, *_ in GENERATORS.values() if pg is not None) / BASE
    edges = []
    for f, t, r, x, b, tap in BRANCHES:
        edges.append({"i": min(f, t), "j": max(f, t),
                      "susceptance": round(float(V[f - 1] * V[t - 1] / x), 10)})
    for k, bus in enumerate(sorted(GENERATORS)):
        pg, vset, h, xd = GENERATORS[bus]
        p = (total_load - scheduled) if pg is None else pg / BASE
        node_id = NBUS + 1 + k
        nodes.append({"id": node_id, "kind": "machine", "inertia": 2.0 * h, "damping": DROOP,
                      "injection": round(p, 10), "terminal_bus": bus})
        edges.append({"i": bus, "j": node_id, "susceptance": round(float(V[bus - 1] ** 2 / xd), 10)})
    return {
        "schema_version": 1,
        "name": "ieee39-lossless",
        "f_nominal": F_NOMINAL,
        "base_mva": BASE,
        "notes": "39 buses + 10 internal machine nodes; B_ij = V_i V_j / x_ij from an AC load flow; "
                 "machine internal node behind x'd with |E| = |V_terminal|; slack machine at bus 31 "
                 "balances the lossless injections.",
        "nodes": nodes,
        "edges": edges,
    }


if __name__ == "__main__":
    out = Path(__file__).resolve().parents[1] / "src" / "piac" / "data" / "ieee39.json"
    doc = build()
    out.write_text(json.dumps(doc, indent=1) + "\n")
    inj = sum(n["injection"] for n in doc["nodes"])
    print(f"wrote {out}: {len(doc['nodes'])} nodes, {len(doc['edges'])} edges, sum P = {inj:.3e}")
