"""Secondary frequency control laws and the analytic oracles they are checked against.

The three laws share the same small kernels (area sums, consensus term, share
weights) so that the multi-level law collapses bit for bit onto the
centralized law with one area and onto the distributed law with one node per
area.  Kernels are numba-compiled so the integrator can call them without
Python overhead.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from numba import njit

from .netmodel import (
    NetworkError,
    Partition,
    PowerNetwork,
    comm_laplacian,
    harmonic_price,
    membership,
    single_area,
)


class Variant(str, Enum):
    GBPIAC = "gbpiac"
    DPIAC = "dpiac"
    MLPIAC = "mlpiac"


ETA_SUMS = ("MF", "F")


@dataclass(frozen=True)
class ControllerGains:
    k1: float
    k2: float
    k3: float = 0.0
    variant: Variant = Variant.MLPIAC
    eta_sum: str = "MF"  # which droop terms feed eta: machines+freq-dependent, or freq-dependent only

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if not (self.k1 > 0 and self.k2 > 0):
            raise ValueError("k1 and k2 must be positive")
        if self.variant is not Variant.GBPIAC and not self.k3 > 0:
            raise ValueError("k3 must be positive for the consensus-based variants")
        if self.k3 < 0:
            raise ValueError("k3 must be non-negative")
        if self.eta_sum not in ETA_SUMS:
            raise ValueError(f"eta_sum must be one of {ETA_SUMS}")

    @property
    def no_overshoot(self) -> bool:
        return self.k2 >= 4.0 * self.k1


# -- kernels -------------------------------------------------------------------

@njit(cache=True)
def _area_sums(values, member, m):
    out = np.zeros(m)
    for k in range(values.size):
        out[member[k]] += values[k]
    return out


@njit(cache=True)
def _consensus(adj, lam):
    m = lam.size
    v = np.zeros(m)
    for r in range(m):
        acc = 0.0
        for q in range(m):
            if adj[r, q] != 0.0:
                acc += adj[r, q] * (lam[r] - lam[q])
        v[r] = acc
    return v


@njit(cache=True)
def _shared_inputs(xi, member, weight, k2):
    # u_i = lambda_r / alpha_i, written as (alpha_r/alpha_i) * k2 xi_r
    ur = k2 * xi
    u = np.empty(member.size)
    for k in range(member.size):
        u[k] = weight[k] * ur[member[k]]
    return u


@njit(cache=True)
def _gbpiac_inputs(xi, member, weight, k2):
    return _shared_inputs(xi, member, weight, k2)


@njit(cache=True)
def _gbpiac_rates(eta, xi, omega, member, alpha_area, adj, inertia, droop, eta_mask, k1, k2, k3):
    deta = _area_sums(droop * omega * eta_mask, member, 1)
    dxi = -k1 * (_area_sums(inertia * omega, member, 1) + eta) - k2 * xi
    return deta, dxi


@njit(cache=True)
def _mlpiac_inputs(xi, member, weight, k2):
    return _shared_inputs(xi, member, weight, k2)


@njit(cache=True)
def _mlpiac_rates(eta, xi, omega, member, alpha_area, adj, inertia, droop, eta_mask, k1, k2, k3):
    m = eta.size
    lam = k2 * alpha_area * xi
    v = _consensus(adj, lam)
    deta = _area_sums(droop * omega * eta_mask, member, m) + k3 * v
    dxi = -k1 * (_area_sums(inertia * omega, member, m) + eta) - k2 * xi
    return deta, dxi


@njit(cache=True)
def _dpiac_inputs(xi, member, weight, k2):
    return k2 * xi


@njit(cache=True)
def _dpiac_rates(eta, xi, omega, member, alpha_area, adj, inertia, droop, eta_mask, k1, k2, k3):
    lam = k2 * alpha_area * xi
    deta = droop * omega * eta_mask + k3 * _consensus(adj, lam)
    dxi = -k1 * (inertia * omega + eta) - k2 * xi
    return deta, dxi


_KERNELS = {
    Variant.GBPIAC: (_gbpiac_inputs, _gbpiac_rates),
    Variant.DPIAC: (_dpiac_inputs, _dpiac_rates),
    Variant.MLPIAC: (_mlpiac_inputs, _mlpiac_rates),
}


# -- assembling a law for a concrete network -------------------------------------

@dataclass(frozen=True)
class ControlPlan:
    """Everything the integrator needs to evaluate one control law."""

    gains: ControllerGains
    partition: Partition
    area_ids: tuple[int, ...]
    member: np.ndarray
    weight: np.ndarray
    alpha_area: np.ndarray
    adj: np.ndarray
    inertia: np.ndarray
    droop: np.ndarray
    eta_mask: np.ndarray
    inputs: object
    rates: object

    @property
    def m(self) -> int:
        return len(self.area_ids)

    def args(self):
        return (self.member, self.alpha_area, self.adj, self.inertia, self.droop, self.eta_mask,
                float(self.gains.k1), float(self.gains.k2), float(self.gains.k3))

    def step(self, eta, xi, omega):
        eta = np.asarray(eta, dtype=float)
        xi = np.asarray(xi, dtype=float)
        omega = np.asarray(omega, dtype=float)
        u = self.inputs(xi, self.member, self.weight, float(self.gains.k2))
        deta, dxi = self.rates(eta, xi, omega, *self.args())
        return deta, dxi, u

    def marginal_costs(self, xi):
        return self.gains.k2 * self.alpha_area * np.asarray(xi, dtype=float)


def build_plan(gains: ControllerGains, net: PowerNetwork, part: Partition | None = None) -> ControlPlan:
    variant = gains.variant
    if variant is Variant.GBPIAC or part is None:
        part = single_area(net)
    kidx = net.controlled_idx
    alpha = net.price
    if np.any(~(alpha > 0)):
        raise NetworkError("every controlled node needs a positive price")
    member = membership(part, net)
    m = part.m
    alpha_area = np.empty(m)
    for r in range(m):
        alpha_area[r] = harmonic_price(alpha[member == r])
    weight = alpha_area[member] / alpha
    if variant is Variant.DPIAC and np.bincount(member, minlength=m).max() > 1:
        raise NetworkError("the distributed law needs exactly one controlled node per area")
    if variant is Variant.DPIAC and np.any(member != np.arange(member.size)):
        raise NetworkError("distributed areas must be numbered in ascending node order")
    if variant is Variant.GBPIAC and m != 1:
        raise NetworkError("the centralized law runs on a single area")
    adj = -comm_laplacian(part)
    np.fill_diagonal(adj, 0.0)
    kinds_machine = np.isin(kidx, net.machine_idx)
    eta_mask = np.ones(kidx.size) if gains.eta_sum == "MF" else (~kinds_machine).astype(float)
    inputs, rates = _KERNELS[variant]
    return ControlPlan(
        gains=gains, partition=part, area_ids=part.area_ids, member=member.astype(np.int64),
        weight=weight, alpha_area=alpha_area, adj=adj, inertia=net.inertia[kidx].copy(),
        droop=net.damping[kidx].copy(), eta_mask=eta_mask, inputs=inputs, rates=rates,
    )


# -- per-variant entry points ----------------------------------------------------
# omega is ordered like net.controlled_ids; eta/xi like the partition's area ids.

def gbpiac_step(eta_s, xi_s, omega, net: PowerNetwork, gains: ControllerGains):
    g = ControllerGains(gains.k1, gains.k2, gains.k3, Variant.GBPIAC, gains.eta_sum)
    return build_plan(g, net).step(np.atleast_1d(eta_s), np.atleast_1d(xi_s), omega)


def dpiac_step(eta, xi, omega, net: PowerNetwork, part: Partition, gains: ControllerGains):
    g = ControllerGains(gains.k1, gains.k2, gains.k3, Variant.DPIAC, gains.eta_sum)
    return build_plan(g, net, part).step(eta, xi, omega)


def mlpiac_step(eta, xi, omega, net: PowerNetwork, part: Partition, gains: ControllerGains):
    g = ControllerGains(gains.k1, gains.k2, gains.k3, Variant.MLPIAC, gains.eta_sum)
    return build_plan(g, net, part).step(eta, xi, omega)


def coordination_signal(lam, part: Partition) -> np.ndarray:
    """v_r = sum_q l_rq (lambda_r - lambda_q)."""
    adj = -comm_laplacian(part)
    np.fill_diagonal(adj, 0.0)
    return _consensus(adj, np.asarray(lam, dtype=float))


# -- oracles ---------------------------------------------------------------------

def optimal_dispatch(p_s: float, alpha) -> tuple[np.ndarray, float]:
    """Minimize sum(alpha_i u_i^2 / 2) subject to sum(u) = -P_s."""
    alpha = np.asarray(alpha, dtype=float)
    if alpha.size == 0:
        raise ValueError("empty controlled set")
    if np.any(~(alpha > 0)):
        raise ValueError("prices must be positive")
    lam = -p_s / np.sum(1.0 / alpha)
    return lam / alpha, float(lam)


def dispatch_cost(u, alpha) -> float:
    return float(0.5 * np.sum(np.asarray(alpha) * np.asarray(u) ** 2))


def area_dispatch_consistency(traj, part: Partition | None = None) -> dict:
    """Check u_i = lambda_r / alpha_i and sum_{i in r} u_i = u_r along a trajectory."""
    net = traj.net
    part = part or traj.partition
    member = membership(part, net)
    alpha = net.price
    alpha_area = np.array([harmonic_price(alpha[member == r]) for r in range(part.m)])
    lam = traj.lam
    marginal = np.abs(traj.u * alpha[None, :] - lam[:, member])
    ur = lam / alpha_area[None, :]
    sums = np.stack([traj.u[:, member == r].sum(axis=1) for r in range(part.m)], axis=1)
    sum_violation = np.abs(sums - ur)
    spread = np.zeros(len(traj.times))
    for r in range(part.m):
        mc = traj.u[:, member == r] * alpha[member == r]
        spread = np.maximum(spread, mc.max(axis=1) - mc.min(axis=1))
    return {
        "max_marginal_violation": float(marginal.max(initial=0.0)),
        "max_sum_violation": float(sum_violation.max(initial=0.0)),
        "max_within_area_spread": float(spread.max(initial=0.0)),
        "per_step": np.maximum(marginal.max(axis=1), sum_violation.max(axis=1)),
    }


def us_eigenvalues(gains: ControllerGains) -> tuple[complex, complex, bool]:
    k1, k2 = gains.k1, gains.k2
    disc = complex(k2 * k2 - 4.0 * k1 * k2)
    root = np.sqrt(disc)
    return (-k2 + root) / 2.0, (-k2 - root) / 2.0, bool(k2 >= 4.0 * k1)


def us_reference_solution(gains: ControllerGains, p_s: float, t) -> np.ndarray:
    """Total control input after a step P_s at t = 0, from rest.

    e = u_s + P_s obeys e'' + k2 e' + k1 k2 e = 0 with e(0) = P_s, e'(0) = 0.
    Negative times return 0.
    """
    k1, k2 = gains.k1, gains.k2
    t = np.asarray(t, dtype=float)
    tt = np.maximum(t, 0.0)
    disc = k2 * k2 - 4.0 * k1 * k2
    beta = 0.5 * np.sqrt(abs(disc))
    decay = np.exp(-0.5 * k2 * tt)
    if disc > 0:
        # written with decaying exponentials only; expm1 keeps small beta*t accurate
        mu1, mu2 = -0.5 * k2 + beta, -0.5 * k2 - beta
        x = 2.0 * beta * tt
        with np.errstate(over="ignore", invalid="ignore"):
            small = np.exp(mu2 * tt) * np.expm1(np.minimum(x, 1.0)) / (2.0 * beta)
        large = (np.exp(mu1 * tt) - np.exp(mu2 * tt)) / (2.0 * beta)
        s = np.where(x <= 1.0, small, large)
        c = 0.5 * (np.exp(mu1 * tt) + np.exp(mu2 * tt))
    elif disc < 0:
        c = decay * np.cos(beta * tt)
        s = decay * np.sin(beta * tt) / beta
    else:
        c = decay
        s = decay * tt
    e = p_s * (c + 0.5 * k2 * s)
    return np.where(t >= 0, e - p_s, 0.0)
