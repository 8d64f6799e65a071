"""Stability and optimality certification.

Spectral decomposition of the symmetrizable matrix L alpha_R, the gain
condition, equilibrium residuals, the V0 + V1 Lyapunov function, consensus
metrics and control cost.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .controllers import ControllerGains, Variant, build_plan, optimal_dispatch
from .dynamics import SystemState, Trajectory, _flows, initial_equilibrium
from .netmodel import Partition, PowerNetwork, area_prices, comm_laplacian


@dataclass(frozen=True)
class Decomposition:
    Q: np.ndarray
    Qinv: np.ndarray
    eigenvalues: np.ndarray
    W: np.ndarray
    S: np.ndarray
    lambda_min: float

    @property
    def Lam(self) -> np.ndarray:
        return np.diag(self.eigenvalues)


def symmetrizable_decompose(L, alpha_R) -> Decomposition:
    """Diagonalize L alpha_R through the symmetric similarity sqrt(alpha) L sqrt(alpha).

    Q is scaled so that Q^T alpha_R Q = I; eigenvalues ascend with the zero
    eigenvalue pinned first; each column of Q has its first nonzero entry positive.
    """
    L = np.atleast_2d(np.asarray(L, dtype=float))
    alpha = np.diag(alpha_R) if np.ndim(alpha_R) == 2 else np.atleast_1d(np.asarray(alpha_R, dtype=float))
    m = L.shape[0]
    if L.shape != (m, m) or alpha.shape != (m,):
        raise ValueError("L must be m x m and alpha_R must have m entries")
    scale = max(1.0, float(np.abs(L).max()))
    if not np.allclose(L, L.T, rtol=0, atol=1e-12 * scale):
        raise ValueError("L must be symmetric")
    if np.any(~(alpha > 0)):
        raise ValueError("alpha_R must be positive")
    t = np.sqrt(alpha)
    A = t[:, None] * L * t[None, :]
    A = 0.5 * (A + A.T)
    vals, G = np.linalg.eigh(A)
    # the kernel of A is spanned by alpha^{-1/2}; pin it exactly
    g1 = 1.0 / t
    g1 /= np.linalg.norm(g1)
    k0 = int(np.argmin(np.abs(vals)))
    order = [k0] + [k for k in range(m) if k != k0]
    vals = vals[order].copy()
    G = G[:, order].copy()
    vals[0] = 0.0
    G[:, 0] = g1
    if m > 1:
        # re-orthogonalize the remaining columns against the pinned kernel vector
        rest = G[:, 1:] - np.outer(g1, g1 @ G[:, 1:])
        rest, _ = np.linalg.qr(rest)
        B = rest.T @ A @ rest
        w, V = np.linalg.eigh(0.5 * (B + B.T))
        vals[1:] = w
        G[:, 1:] = rest @ V
    Q = G / t[:, None]
    for c in range(m):
        col = Q[:, c]
        nz = np.flatnonzero(np.abs(col) > 1e-12 * np.abs(col).max())
        if nz.size and col[nz[0]] < 0:
            Q[:, c] = -col
            G[:, c] = -G[:, c]
    Qinv = G.T * t[None, :]
    return Decomposition(Q=Q, Qinv=Qinv, eigenvalues=vals, W=Qinv[1:, :].T.copy(), S=Q[:, 1:].copy(),
                         lambda_min=float(vals[1]) if m > 1 else float("nan"))


def decomposition_residuals(dec: Decomposition, L, alpha_R) -> dict[str, float]:
    """Max-abs residual of every identity attached to the decomposition."""
    L = np.atleast_2d(np.asarray(L, dtype=float))
    alpha = np.diag(alpha_R) if np.ndim(alpha_R) == 2 else np.atleast_1d(np.asarray(alpha_R, dtype=float))
    m = alpha.size
    A, Ai = np.diag(alpha), np.diag(1.0 / alpha)
    Q, Qi, W, S = dec.Q, dec.Qinv, dec.W, dec.S
    I, Im = np.eye(m), np.eye(m - 1)
    ones = np.ones(m)

    def err(x):
        return float(np.abs(x).max(initial=0.0))

    return {
        "diagonalization": err(Qi @ L @ A @ Q - dec.Lam),
        "Qv1_ones": err(Qi[0] - ones),
        "alphaQ1_ones": err(A @ Q[:, 0] - ones),
        "QtAQ_I": err(Q.T @ A @ Q - I),
        "QinvAinvQinvT_I": err(Qi @ Ai @ Qi.T - I),
        "Qinv_QtA": err(Qi - Q.T @ A),
        "WtS_I": err(W.T @ S - Im),
        "WtAinvW_I": err(W.T @ Ai @ W - Im),
        "StAS_I": err(S.T @ A @ S - Im),
        "Qvi_alphaQi": err(Qi.T - A @ Q),
        "W_alphaS": err(W - A @ S),
    }


EIGHT_IDENTITIES = ("Qv1_ones", "alphaQ1_ones", "QtAQ_I", "QinvAinvQinvT_I", "Qinv_QtA",
                    "WtS_I", "WtAinvW_I", "StAS_I")


def decompose_partition(net: PowerNetwork, part: Partition) -> Decomposition:
    return symmetrizable_decompose(comm_laplacian(part), area_prices(part, net))


# -- gain condition ----------------------------------------------------------------

def gain_condition_bound(alpha_d_min: float, alpha_d_max: float, k3: float, lambda_min: float,
                         form: str = "proof") -> float:
    """Lower bound on k2/k1.

    ``proof``: 2 (aD)max / ((aD)min (1 + 2 k3 lmin)).
    ``reported``: 2 (aD)max / ((aD)min + 2 k3 lmin), the expression behind the
    case-study numbers.
    """
    if form == "proof":
        return 2.0 * alpha_d_max / (alpha_d_min * (1.0 + 2.0 * k3 * lambda_min))
    if form == "reported":
        return 2.0 * alpha_d_max / (alpha_d_min + 2.0 * k3 * lambda_min)
    raise ValueError(f"unknown form {form!r}")


@dataclass(frozen=True)
class GainReport:
    satisfied: bool
    ratio: float
    required: float
    margin: float
    alpha_d_min: float
    alpha_d_max: float
    lambda_min: float
    form: str

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def check_gain_condition(gains: ControllerGains, net: PowerNetwork, part: Partition,
                         decomp: Decomposition | None = None, form: str = "proof") -> GainReport:
    """Evaluate the sufficient gain condition.  margin = (k2/k1) / required.

    With a single area there is no consensus dynamics and the condition is not
    needed; it is reported satisfied with an undefined bound.
    """
    kidx = net.controlled_idx
    ad = net.price * net.damping[kidx]
    ratio = gains.k2 / gains.k1
    if gains.variant is Variant.GBPIAC or part.m == 1:
        return GainReport(True, ratio, float("nan"), float("inf"), float(ad.min()), float(ad.max()),
                          float("nan"), form)
    decomp = decomp or decompose_partition(net, part)
    req = gain_condition_bound(float(ad.min()), float(ad.max()), gains.k3, decomp.lambda_min, form)
    return GainReport(bool(ratio > req), ratio, req, ratio / req, float(ad.min()), float(ad.max()),
                      decomp.lambda_min, form)


# -- equilibrium ---------------------------------------------------------------------

@dataclass(frozen=True)
class Equilibrium:
    phi: np.ndarray
    omega: np.ndarray
    eta: np.ndarray
    xi: np.ndarray
    u: np.ndarray
    p_s: float
    lam: float

    def state(self, t: float = 0.0) -> SystemState:
        return SystemState(t, self.phi.copy(), self.omega.copy(), self.eta.copy(), self.xi.copy())


def closed_loop_equilibrium(net: PowerNetwork, part: Partition, gains: ControllerGains,
                            injection=None) -> Equilibrium:
    """The synchronous state the closed loop settles to for the given injections."""
    plan = build_plan(gains, net, part)
    P = net.injection if injection is None else np.asarray(injection, dtype=float)
    p_s = float(P.sum())
    u, lam = optimal_dispatch(p_s, net.price)
    Pu = P.copy()
    Pu[net.controlled_idx] += u
    phi = initial_equilibrium(net, Pu)
    xi = lam / (gains.k2 * plan.alpha_area)
    eta = -gains.k2 * xi / gains.k1
    return Equilibrium(phi, np.zeros(net.controlled_idx.size), eta, xi, u, p_s, lam)


def verify_equilibrium(state: SystemState, net: PowerNetwork, part: Partition, gains: ControllerGains,
                       p_s: float | None = None) -> dict[str, float]:
    plan = build_plan(gains, net, part)
    p_s = float(net.injection.sum()) if p_s is None else float(p_s)
    xi = np.asarray(state.xi, dtype=float)
    eta = np.asarray(state.eta, dtype=float)
    mc = plan.alpha_area * xi
    u = plan.inputs(xi, plan.member, plan.weight, float(gains.k2))
    return {
        "frequency": float(np.abs(state.omega).max(initial=0.0)),
        "imbalance": float(abs(p_s + gains.k2 * xi.sum())),
        "integral": float(np.abs(gains.k1 * eta + gains.k2 * xi).max()),
        "consensus": float(mc.max() - mc.min()),
        "dispatch": float(np.abs(net.price * u - gains.k2 * mc[plan.member]).max()),
    }


# -- Lyapunov function ---------------------------------------------------------------

def _potential(phi, net: PowerNetwork):
    ei, ej, b = net.edge_index
    d = phi[..., ei] - phi[..., ej]
    return np.sum(b * (1.0 - np.cos(d)), axis=-1)


def lyapunov_V0_V1(traj_or_state, net: PowerNetwork, equilibrium: Equilibrium | None,
                   gains: ControllerGains, c1: float = 0.0) -> np.ndarray:
    """V0 + V1 along a trajectory (or at one state), relative to ``equilibrium``."""
    if equilibrium is None:
        raise ValueError("an equilibrium is required")
    if isinstance(traj_or_state, Trajectory):
        phi, omega, eta, xi = traj_or_state.phi, traj_or_state.omega, traj_or_state.eta, traj_or_state.xi
    else:
        s = traj_or_state
        phi, omega, eta, xi = (np.atleast_2d(s.phi), np.atleast_2d(s.omega), np.atleast_2d(s.eta),
                               np.atleast_2d(s.xi))
    kidx = net.controlled_idx
    Mk = net.inertia[kidx]
    ei, ej, b = net.edge_index
    phis = equilibrium.phi
    grad = _flows(phis, ei, ej, b, net.n)
    v0 = (_potential(phi, net) - _potential(phis, net) - (phi - phis) @ grad
          + 0.5 * np.sum(Mk * omega ** 2, axis=1))
    k1, k2 = gains.k1, gains.k2
    ups = omega @ Mk + eta.sum(axis=1)
    sig = xi.sum(axis=1)
    a = k1 * (ups - equilibrium.p_s / k1)
    bb = k2 * (sig + equilibrium.p_s / k2)
    v1 = ((c1 + 1.0) * (a ** 2 / (2 * k1) + bb ** 2 / (2 * k2)) + bb ** 2 / (2 * k2)
          + (a + bb) ** 2 / (2 * k1))
    out = v0 + v1
    return out if isinstance(traj_or_state, Trajectory) else out[0]


# -- metrics -----------------------------------------------------------------------------

def disturbance_time(traj: Trajectory) -> float:
    change = np.flatnonzero(np.diff(traj.p_s) != 0)
    return float(traj.times[change[0] + 1]) if change.size else float(traj.times[0])


def consensus_metrics(traj: Trajectory, part: Partition | None = None, eps: float = 0.05):
    """(spread(t), settle time in seconds after the first disturbance).

    Settled means spread <= eps |lambda*| from then on; inf if never.
    """
    spread = traj.lam.max(axis=1) - traj.lam.min(axis=1)
    _, lam_star = optimal_dispatch(float(traj.p_s[-1]), traj.net.price)
    t0 = disturbance_time(traj)
    bad = np.flatnonzero((spread > eps * abs(lam_star)) & (traj.times >= t0))
    if bad.size == 0:
        return spread, 0.0
    if bad[-1] == len(traj.times) - 1:
        return spread, float("inf")
    return spread, float(traj.times[bad[-1] + 1] - t0)


def control_cost(traj: Trajectory, net: PowerNetwork | None = None) -> float:
    net = net or traj.net
    integrand = 0.5 * (traj.u ** 2) @ net.price
    if len(traj.times) < 2:
        return 0.0
    return float(trapezoid(integrand, traj.times))


def marginal_cost_spread(traj: Trajectory, k: int = -1) -> float:
    """Spread of alpha_i u_i over all controlled nodes at sample k."""
    mc = traj.u[k] * traj.net.price
    return float(mc.max() - mc.min())
