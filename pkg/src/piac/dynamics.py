"""Closed-loop simulation of the lossless swing-equation DAE.

Angles are carried relative to the lowest-id machine (phi_ref == 0).  Machines
and frequency-dependent buses are differential, passive buses algebraic; the
algebraic block is re-solved by Newton at every RK4 stage.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numba import njit

from .controllers import ControlPlan, ControllerGains, build_plan
from .netmodel import NetworkError, Partition, PowerNetwork


class NoSecureEquilibrium(RuntimeError):
    pass


class AlgebraicSolveError(RuntimeError):
    pass


class SimulationError(RuntimeError):
    def __init__(self, message: str, trajectory: "Trajectory | None" = None):
        super().__init__(message)
        self.trajectory = trajectory


@dataclass(frozen=True)
class Disturbance:
    at: float
    node: int
    delta_P: float

    def __post_init__(self):
        if self.at < 0:
            raise ValueError("disturbance time must be non-negative")


@dataclass
class SystemState:
    t: float
    phi: np.ndarray     # all nodes, ascending id
    omega: np.ndarray   # controlled nodes, ascending id
    eta: np.ndarray     # per area
    xi: np.ndarray

    def in_security_region(self, net: PowerNetwork, bound: float = np.pi / 2) -> bool:
        ei, ej, _ = net.edge_index
        return bool(np.all(np.abs(self.phi[ei] - self.phi[ej]) < bound))


@dataclass
class Trajectory:
    net: PowerNetwork
    partition: Partition
    gains: ControllerGains
    times: np.ndarray
    phi: np.ndarray
    omega: np.ndarray
    eta: np.ndarray
    xi: np.ndarray
    u: np.ndarray
    lam: np.ndarray
    p_s: np.ndarray
    passive_residual: np.ndarray
    area_ids: tuple[int, ...] = ()
    meta: dict = field(default_factory=dict)

    @property
    def u_s(self) -> np.ndarray:
        return self.u.sum(axis=1)

    @cached_property
    def omega_s(self) -> np.ndarray:
        return abstract_frequency_trace(self)

    def __len__(self):
        return len(self.times)

    def state(self, k: int) -> SystemState:
        return SystemState(float(self.times[k]), self.phi[k].copy(), self.omega[k].copy(),
                           self.eta[k].copy(), self.xi[k].copy())

    def final_state(self) -> SystemState:
        return self.state(len(self.times) - 1)


# -- plant kernels ---------------------------------------------------------------

@njit(cache=True)
def _flows(phi, ei, ej, b, n):
    f = np.zeros(n)
    for e in range(ei.size):
        s = b[e] * np.sin(phi[ei[e]] - phi[ej[e]])
        f[ei[e]] += s
        f[ej[e]] -= s
    return f


@njit(cache=True)
def _solve_passive(phi, P, ei, ej, b, ppos, slot, tol, maxit):
    """Newton on the passive rows; updates phi in place.  Returns (iterations, residual), -1 on failure."""
    n = phi.size
    npas = ppos.size
    if npas == 0:
        return 0, 0.0
    for it in range(maxit + 1):
        f = _flows(phi, ei, ej, b, n)
        res = np.empty(npas)
        worst = 0.0
        for k in range(npas):
            res[k] = P[ppos[k]] - f[ppos[k]]
            if abs(res[k]) > worst:
                worst = abs(res[k])
        if worst < tol:
            return it, worst
        if it == maxit or not np.isfinite(worst):
            break
        J = np.zeros((npas, npas))
        for e in range(ei.size):
            a = slot[ei[e]]
            c = slot[ej[e]]
            w = b[e] * np.cos(phi[ei[e]] - phi[ej[e]])
            if a >= 0:
                J[a, a] += w
            if c >= 0:
                J[c, c] += w
            if a >= 0 and c >= 0:
                J[a, c] -= w
                J[c, a] -= w
        delta = np.linalg.solve(J, res)
        for k in range(npas):
            phi[ppos[k]] += delta[k]
    return -1, worst


@njit(cache=True)
def _evaluate(x, P, phi, kpos, is_machine, ref_k, M, D, ei, ej, b, ppos, slot, tol, maxit,
              inputs, rates, member, weight, alpha_area, adj, inertia, droop, eta_mask, k1, k2, k3):
    """Closed-loop right-hand side at x = [phi_K, omega_K, eta, xi].

    Returns (dx, omega_K, u, status, passive residual).  phi (all nodes) is
    updated in place so passive angles warm-start the next call.
    """
    nk = kpos.size
    m = (x.size - 2 * nk) // 2
    for k in range(nk):
        phi[kpos[k]] = x[k]
    it, resid = _solve_passive(phi, P, ei, ej, b, ppos, slot, tol, maxit)
    f = _flows(phi, ei, ej, b, phi.size)
    eta = x[2 * nk:2 * nk + m]
    xi = x[2 * nk + m:]
    u = inputs(xi, member, weight, k2)
    omega = np.empty(nk)
    dx = np.zeros(x.size)
    for k in range(nk):
        i = kpos[k]
        if is_machine[k]:
            omega[k] = x[nk + k]
            dx[nk + k] = (P[i] - D[i] * omega[k] - f[i] + u[k]) / M[i]
        else:
            omega[k] = (P[i] - f[i] + u[k]) / D[i]
    w_ref = omega[ref_k]
    for k in range(nk):
        dx[k] = omega[k] - w_ref
    deta, dxi = rates(eta, xi, omega, member, alpha_area, adj, inertia, droop, eta_mask, k1, k2, k3)
    dx[2 * nk:2 * nk + m] = deta
    dx[2 * nk + m:] = dxi
    return dx, omega, u, it, resid


@njit(cache=True)
def _run(x0, phi0, P_sched, sched_steps, n_steps, dt, record_every, angle_bound,
         kpos, is_machine, ref_k, M, D, ei, ej, b, ppos, slot, tol, maxit,
         inputs, rates, member, weight, alpha_area, adj, inertia, droop, eta_mask, k1, k2, k3,
         rec_t, rec_phi, rec_omega, rec_eta, rec_xi, rec_u, rec_ps, rec_res):
    nk = kpos.size
    m = (x0.size - 2 * nk) // 2
    x = x0.copy()
    phi = phi0.copy()
    P = P_sched[0].copy()
    nsched = sched_steps.size
    nxt = 0
    row = 0
    status = 0
    for step in range(n_steps + 1):
        while nxt < nsched and sched_steps[nxt] == step:
            P = P_sched[nxt + 1].copy()
            nxt += 1
        k1v, omega, u, it, resid = _evaluate(x, P, phi, kpos, is_machine, ref_k, M, D, ei, ej, b,
                                             ppos, slot, tol, maxit, inputs, rates, member, weight,
                                             alpha_area, adj, inertia, droop, eta_mask, k1, k2, k3)
        if it < 0:
            status = 1
        else:
            for e in range(ei.size):
                if abs(phi[ei[e]] - phi[ej[e]]) >= angle_bound:
                    status = 2
                    break
            for k in range(x.size):
                if not np.isfinite(x[k]):
                    status = 3
                    break
        if step % record_every == 0 or step == n_steps or status != 0:
            rec_t[row] = step * dt
            rec_phi[row] = phi
            rec_omega[row] = omega
            rec_eta[row] = x[2 * nk:2 * nk + m]
            rec_xi[row] = x[2 * nk + m:]
            rec_u[row] = u
            s = 0.0
            for i in range(P.size):
                s += P[i]
            rec_ps[row] = s
            rec_res[row] = resid
            row += 1
        if status != 0 or step == n_steps:
            return status, row, step
        phi_save = phi.copy()
        k2v = _evaluate(x + 0.5 * dt * k1v, P, phi, kpos, is_machine, ref_k, M, D, ei, ej, b, ppos, slot,
                        tol, maxit, inputs, rates, member, weight, alpha_area, adj, inertia, droop,
                        eta_mask, k1, k2, k3)
        k3v = _evaluate(x + 0.5 * dt * k2v[0], P, phi, kpos, is_machine, ref_k, M, D, ei, ej, b, ppos,
                        slot, tol, maxit, inputs, rates, member, weight, alpha_area, adj, inertia, droop,
                        eta_mask, k1, k2, k3)
        k4v = _evaluate(x + dt * k3v[0], P, phi, kpos, is_machine, ref_k, M, D, ei, ej, b, ppos, slot,
                        tol, maxit, inputs, rates, member, weight, alpha_area, adj, inertia, droop,
                        eta_mask, k1, k2, k3)
        if k2v[3] < 0 or k3v[3] < 0 or k4v[3] < 0:
            phi[:] = phi_save
            return 1, row, step
        x = x + (dt / 6.0) * (k1v + 2.0 * k2v[0] + 2.0 * k3v[0] + k4v[0])
    return status, row, n_steps


# -- public operations -------------------------------------------------------------

def _passive_layout(net: PowerNetwork):
    ppos = net.passive_idx.astype(np.int64)
    slot = -np.ones(net.n, dtype=np.int64)
    slot[ppos] = np.arange(ppos.size)
    return ppos, slot


def solve_passive_angles(phi, net: PowerNetwork, injection=None, tol: float = 1e-10, maxit: int = 50):
    """Return phi with the passive entries solved from the power-balance rows.

    Non-passive entries are left untouched; the passive entries of the input
    serve as the Newton starting point.
    """
    phi = np.array(phi, dtype=float)
    P = net.injection if injection is None else np.asarray(injection, dtype=float)
    ei, ej, b = net.edge_index
    ppos, slot = _passive_layout(net)
    it, _ = _solve_passive(phi, P, ei, ej, b, ppos, slot, tol, maxit)
    if it < 0:
        raise AlgebraicSolveError("algebraic constraint solve failed")
    return phi


def passive_residual(phi, net: PowerNetwork, injection=None) -> float:
    P = net.injection if injection is None else np.asarray(injection, dtype=float)
    ei, ej, b = net.edge_index
    f = _flows(np.asarray(phi, dtype=float), ei, ej, b, net.n)
    r = (P - f)[net.passive_idx]
    return float(np.abs(r).max(initial=0.0))


def swing_rhs(state: SystemState, net: PowerNetwork, u, injection=None) -> tuple[np.ndarray, np.ndarray]:
    """(dphi, domega) for the controlled nodes, in ascending id order.

    For frequency-dependent buses domega is 0 and dphi carries the algebraic
    droop balance.  Passive angles in ``state.phi`` are taken as given.
    """
    P = net.injection if injection is None else np.asarray(injection, dtype=float)
    ei, ej, b = net.edge_index
    f = _flows(np.asarray(state.phi, dtype=float), ei, ej, b, net.n)
    kidx = net.controlled_idx
    u = np.asarray(u, dtype=float)
    is_m = np.isin(kidx, net.machine_idx)
    omega = np.array(state.omega, dtype=float)
    domega = np.zeros(kidx.size)
    Pk, Dk, fk = P[kidx], net.damping[kidx], f[kidx]
    domega[is_m] = (Pk[is_m] - Dk[is_m] * omega[is_m] - fk[is_m] + u[is_m]) / net.inertia[kidx][is_m]
    omega[~is_m] = (Pk[~is_m] - fk[~is_m] + u[~is_m]) / Dk[~is_m]
    ref_k = int(np.searchsorted(kidx, net.reference_idx))
    dphi = omega - omega[ref_k]
    return dphi, domega


def dae_regularity_check(state_or_phi, net: PowerNetwork, rtol: float = 1e-12) -> tuple[bool, float]:
    """Full rank of the passive block of the flow Jacobian; returns (regular, smallest singular value)."""
    phi = state_or_phi.phi if isinstance(state_or_phi, SystemState) else np.asarray(state_or_phi, dtype=float)
    ppos, slot = _passive_layout(net)
    if ppos.size == 0:
        return True, float("inf")
    ei, ej, b = net.edge_index
    J = np.zeros((ppos.size, ppos.size))
    for a_node, c_node, bb in zip(ei, ej, b):
        w = bb * np.cos(phi[a_node] - phi[c_node])
        a, c = slot[a_node], slot[c_node]
        if a >= 0:
            J[a, a] += w
        if c >= 0:
            J[c, c] += w
        if a >= 0 and c >= 0:
            J[a, c] -= w
            J[c, a] -= w
    sv = np.linalg.svd(J, compute_uv=False)
    smin = float(sv.min())
    scale = float(max(sv.max(), np.abs(b).max()))
    return smin > rtol * scale, smin


def initial_equilibrium(net: PowerNetwork, injection=None, tol: float = 1e-11, maxit: int = 50,
                        bound: float = np.pi / 2) -> np.ndarray:
    """Relative angles phi* of the balanced network at rest (omega = 0, u = 0)."""
    P = net.injection if injection is None else np.asarray(injection, dtype=float)
    scale = max(1.0, float(np.abs(P).max(initial=0.0)))
    if abs(P.sum()) > 1e-9 * scale:
        raise NoSecureEquilibrium(f"no secure equilibrium: injections are not balanced (sum {P.sum():.3e})")
    ref = net.reference_idx
    keep = np.array([k for k in range(net.n) if k != ref], dtype=int)
    B = net.susceptance_matrix
    lap = np.diag(B.sum(axis=1)) - B
    theta = np.zeros(net.n)
    if keep.size == 0:
        return theta
    theta[keep] = np.linalg.solve(lap[np.ix_(keep, keep)], P[keep])
    ei, ej, b = net.edge_index
    for _ in range(maxit):
        f = _flows(theta, ei, ej, b, net.n)
        r = P - f
        if np.abs(r[keep]).max() < tol:
            break
        C = B * np.cos(theta[:, None] - theta[None, :])
        J = np.diag(C.sum(axis=1)) - C
        try:
            theta[keep] += np.linalg.solve(J[np.ix_(keep, keep)], r[keep])
        except np.linalg.LinAlgError:
            raise NoSecureEquilibrium("no secure equilibrium: singular load-flow Jacobian") from None
        if not np.all(np.isfinite(theta)):
            raise NoSecureEquilibrium("no secure equilibrium: Newton diverged")
    else:
        raise NoSecureEquilibrium("no secure equilibrium: Newton did not converge")
    if np.any(np.abs(theta[ei] - theta[ej]) >= bound):
        raise NoSecureEquilibrium("no secure equilibrium: solution violates the security constraint")
    return theta - theta[ref]


def synchronized_frequency(net: PowerNetwork, u_total: float, injection=None) -> float:
    P = net.injection if injection is None else np.asarray(injection, dtype=float)
    d = float(net.damping[net.controlled_idx].sum())
    if d == 0:
        raise ValueError("zero total droop")
    return (float(np.sum(P)) + u_total) / d


def abstract_frequency_trace(traj: Trajectory) -> np.ndarray:
    """Integrate M_s w' = P_s - D_s w + u_s on the trajectory grid from w(0) = 0.

    Exact for piecewise-constant P_s and piecewise-linear u_s between samples.
    """
    net = traj.net
    ms = float(net.inertia.sum())
    ds = float(net.damping[net.controlled_idx].sum())
    t = traj.times
    us = traj.u_s
    ps = traj.p_s
    out = np.zeros(t.size)
    a = ds / ms
    for k in range(t.size - 1):
        h = t[k + 1] - t[k]
        e = np.exp(-a * h)
        # forcing (P + u0 + (u1-u0) s/h) / ms on [0, h]; rows hold the post-step P
        p = ps[k]
        g0 = (p + us[k]) / ms
        g1 = (us[k + 1] - us[k]) / (ms * h)
        phi1 = (1 - e) / a
        phi2 = (h - phi1) / a
        out[k + 1] = e * out[k] + g0 * phi1 + g1 * phi2
    return out


def integrate(net: PowerNetwork, part: Partition | None, controller: ControllerGains | ControlPlan,
              disturbances=(), t_end: float = 70.0, dt: float = 1e-3, record_every: int = 1,
              angle_bound: float = np.pi / 2, phi0=None, newton_tol: float = 1e-10,
              newton_maxit: int = 50) -> Trajectory:
    """Fixed-step RK4 of the closed loop; controller states start at zero.

    Disturbances are steps in P applied at the grid point nearest their time.
    """
    if not (t_end > 0 and dt > 0 and dt <= t_end):
        raise ValueError("need t_end > 0 and 0 < dt <= t_end")
    if record_every < 1:
        raise ValueError("record_every must be >= 1")
    plan = controller if isinstance(controller, ControlPlan) else build_plan(controller, net, part)
    n_steps = int(round(t_end / dt))

    if phi0 is None:
        phi0 = initial_equilibrium(net)
    phi0 = np.array(phi0, dtype=float)
    phi0 = phi0 - phi0[net.reference_idx]

    P0 = net.injection.copy()
    events: dict[int, np.ndarray] = {}
    for d in sorted(disturbances, key=lambda d: d.at):
        if d.node not in net.index:
            raise NetworkError(f"disturbance on unknown node {d.node}")
        k = int(round(d.at / dt))
        if k > n_steps:
            continue
        events.setdefault(k, np.zeros(net.n))[net.index[d.node]] += d.delta_P
    steps = np.array(sorted(events), dtype=np.int64)
    sched = [P0]
    for k in steps:
        sched.append(sched[-1] + events[int(k)])
    P_sched = np.array(sched)

    kidx = net.controlled_idx
    nk, m = kidx.size, plan.m
    is_machine = np.isin(kidx, net.machine_idx)
    ref_k = int(np.searchsorted(kidx, net.reference_idx))
    x0 = np.zeros(2 * nk + 2 * m)
    x0[:nk] = phi0[kidx]
    ei, ej, b = net.edge_index
    ppos, slot = _passive_layout(net)

    rows = n_steps // record_every + 2
    rec_t = np.zeros(rows)
    rec_phi = np.zeros((rows, net.n))
    rec_omega = np.zeros((rows, nk))
    rec_eta = np.zeros((rows, m))
    rec_xi = np.zeros((rows, m))
    rec_u = np.zeros((rows, nk))
    rec_ps = np.zeros(rows)
    rec_res = np.zeros(rows)

    status, row, step = _run(
        x0, phi0, P_sched, steps, n_steps, float(dt), int(record_every), float(angle_bound),
        kidx.astype(np.int64), is_machine, ref_k, net.inertia, net.damping, ei, ej, b, ppos, slot,
        float(newton_tol), int(newton_maxit), plan.inputs, plan.rates, plan.member, plan.weight,
        plan.alpha_area, plan.adj, plan.inertia, plan.droop, plan.eta_mask,
        float(plan.gains.k1), float(plan.gains.k2), float(plan.gains.k3),
        rec_t, rec_phi, rec_omega, rec_eta, rec_xi, rec_u, rec_ps, rec_res,
    )
    traj = Trajectory(
        net=net, partition=plan.partition, gains=plan.gains, times=rec_t[:row], phi=rec_phi[:row],
        omega=rec_omega[:row], eta=rec_eta[:row], xi=rec_xi[:row], u=rec_u[:row],
        lam=plan.gains.k2 * plan.alpha_area[None, :] * rec_xi[:row], p_s=rec_ps[:row],
        passive_residual=rec_res[:row], area_ids=plan.area_ids,
        meta={"dt": dt, "t_end": t_end, "record_every": record_every, "steps": step},
    )
    if status == 1:
        raise SimulationError(f"algebraic constraint solve failed at t = {step * dt:.6g} s", traj)
    if status == 2:
        raise SimulationError(f"angle difference left the safety bound at t = {step * dt:.6g} s", traj)
    if status == 3:
        raise SimulationError(f"state became non-finite at t = {step * dt:.6g} s", traj)
    return traj
