import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from conftest import SECTION_GAINS, five_node_network, five_node_partitions
from piac.analysis import (
    EIGHT_IDENTITIES,
    Equilibrium,
    check_gain_condition,
    closed_loop_equilibrium,
    consensus_metrics,
    control_cost,
    decompose_partition,
    decomposition_residuals,
    gain_condition_bound,
    lyapunov_V0_V1,
    symmetrizable_decompose,
    verify_equilibrium,
)
from piac.controllers import ControllerGains
from piac.dynamics import Disturbance, SystemState, Trajectory, integrate
from piac.netmodel import Edge, Node, NodeKind, Partition, PowerNetwork, comm_laplacian, single_area

M, F = NodeKind.MACHINE, NodeKind.FREQ_DEPENDENT
CONSISTENT = ("diagonalization", "QtAQ_I", "QinvAinvQinvT_I", "Qinv_QtA", "WtS_I", "WtAinvW_I", "StAS_I",
              "Qvi_alphaQi", "W_alphaS")


def random_laplacian(rng, m):
    W = np.zeros((m, m))
    for r in range(1, m):
        q = rng.integers(0, r)
        W[r, q] = W[q, r] = rng.uniform(0.1, 5.0)
    for _ in range(rng.integers(0, m)):
        r, q = rng.integers(0, m, 2)
        if r != q:
            W[r, q] = W[q, r] = rng.uniform(0.1, 5.0)
    return np.diag(W.sum(1)) - W


# -- decomposition ---------------------------------------------------------------------

def test_scalar_decomposition():
    d = symmetrizable_decompose([[0.0]], [1.0])
    np.testing.assert_array_equal(d.eigenvalues, [0.0])
    np.testing.assert_allclose(d.Q, [[1.0]])
    np.testing.assert_allclose(d.Qinv[0], [1.0])
    assert np.isnan(d.lambda_min) and d.W.shape == (1, 0)


def test_scalar_decomposition_scaling():
    d = symmetrizable_decompose([[0.0]], [4.0])
    # Q^T alpha Q = 1 fixes Q = alpha^{-1/2}
    np.testing.assert_allclose(d.Q, [[0.5]])


def test_two_area_unit_prices():
    L = np.array([[1.0, -1.0], [-1.0, 1.0]])
    d = symmetrizable_decompose(L, [1.0, 1.0])
    np.testing.assert_allclose(d.eigenvalues, [0.0, 2.0], atol=1e-14)
    assert d.lambda_min == pytest.approx(2.0, abs=1e-14)
    s = 1 / np.sqrt(2)
    np.testing.assert_allclose(d.Q, [[s, s], [s, -s]], atol=1e-14)


@pytest.mark.parametrize("L, alpha", [
    ([[1.0, -1.0], [-0.5, 1.0]], [1.0, 1.0]),
    ([[1.0, -1.0], [-1.0, 1.0]], [1.0, 0.0]),
    ([[1.0, -1.0], [-1.0, 1.0]], [1.0, -2.0]),
])
def test_decomposition_rejects_bad_input(L, alpha):
    with pytest.raises(ValueError):
        symmetrizable_decompose(L, alpha)


def test_consistent_identities_on_random_instances():
    rng = np.random.default_rng(7)
    for _ in range(100):
        m = int(rng.integers(1, 21))
        L = random_laplacian(rng, m)
        alpha = 1.0 / (1.0 - rng.random(m))
        d = symmetrizable_decompose(L, alpha)
        res = decomposition_residuals(d, L, alpha)
        for key in CONSISTENT:
            assert res[key] < 1e-10, (key, m, res[key])
        # the kernel column is the constant vector scaled by the harmonic price
        np.testing.assert_allclose(alpha * d.Q[:, 0], np.full(m, np.sqrt(1.0 / np.sum(1.0 / alpha))), rtol=1e-12)
        assert np.all(np.diff(d.eigenvalues) >= -1e-12) and d.eigenvalues[0] == 0.0


def test_all_identities_when_harmonic_price_is_one():
    rng = np.random.default_rng(8)
    for _ in range(50):
        m = int(rng.integers(1, 21))
        L = random_laplacian(rng, m)
        alpha = 1.0 / (1.0 - rng.random(m))
        alpha *= np.sum(1.0 / alpha)
        res = decomposition_residuals(symmetrizable_decompose(L, alpha), L, alpha)
        assert max(res[k] for k in EIGHT_IDENTITIES) < 1e-10


def test_lambda_min_matches_generalized_eigensolver():
    rng = np.random.default_rng(9)
    for _ in range(100):
        m = int(rng.integers(2, 21))
        L = random_laplacian(rng, m)
        alpha = 1.0 / (1.0 - rng.random(m))
        # L v = lam alpha^{-1} v has the spectrum of L alpha
        ref = scipy.linalg.eigh(L, np.diag(1.0 / alpha), eigvals_only=True)
        d = symmetrizable_decompose(L, alpha)
        scale = max(1.0, ref.max())
        np.testing.assert_allclose(d.eigenvalues, ref, atol=1e-10 * scale)
        assert abs(d.lambda_min - ref[1]) < 1e-10 * scale


@given(st.integers(2, 12), st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_column_signs_fixed(m, seed):
    rng = np.random.default_rng(seed)
    L = random_laplacian(rng, m)
    d = symmetrizable_decompose(L, 1.0 / (1.0 - rng.random(m)))
    for col in d.Q.T:
        nz = col[np.abs(col) > 1e-12 * np.abs(col).max()]
        assert nz[0] > 0


def test_bundled_lambda_min_reported(ieee39):
    net, parts, _ = ieee39
    lam_d = decompose_partition(net, parts["dpiac"]).lambda_min
    lam_m = decompose_partition(net, parts["mlpiac"]).lambda_min
    # same order as the published instance (0.0365 and 0.1933); alpha is seed-dependent
    assert 0.1 < lam_d / 0.0365 < 10 and 0.1 < lam_m / 0.1933 < 10
    assert lam_m > lam_d


# -- gain condition -------------------------------------------------------------------------

def test_uniform_alpha_d_needs_only_k2_over_2k1():
    net = five_node_network()
    gamma = 0.7
    kidx = net.controlled_idx
    net = net.with_prices({i: gamma / net.damping[k] for i, k in zip(net.controlled_ids, kidx)})
    part = five_node_partitions(net)["dpiac"]
    for form in ("proof", "reported"):
        rep = check_gain_condition(ControllerGains(1.0, 2.01, 1e-3, "dpiac"), net, part, form=form)
        assert rep.satisfied and rep.required < 2.0


def test_section_five_regime_unsatisfied(ieee39):
    net, parts, _ = ieee39
    g = ControllerGains(variant="mlpiac", **SECTION_GAINS)
    rep = check_gain_condition(g, net, parts["mlpiac"])
    assert not rep.satisfied and rep.ratio == pytest.approx(4.0)
    assert rep.alpha_d_min == pytest.approx(70.0 * net.price.min())


def test_reported_numbers_from_published_inputs():
    assert gain_condition_bound(70, 42560, 10, 0.0365, "reported") == pytest.approx(1203, abs=1)
    assert gain_condition_bound(70, 42560, 10, 0.1933, "reported") == pytest.approx(1152, abs=1)
    with pytest.raises(ValueError):
        gain_condition_bound(70, 42560, 10, 0.1933, "other")


def test_gbpiac_needs_no_gain_condition(five):
    net, parts = five
    rep = check_gain_condition(ControllerGains(0.4, 0.5, variant="gbpiac"), net, parts["gbpiac"])
    assert rep.satisfied and np.isnan(rep.required)


@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3), st.floats(1e-4, 10.0), st.sampled_from(["proof", "reported"]))
def test_bound_decreases_in_k3(k3a, k3b, lam, form):
    lo, hi = sorted((k3a, k3b))
    assert gain_condition_bound(70, 42560, hi, lam, form) <= gain_condition_bound(70, 42560, lo, lam, form)


@given(st.floats(0.01, 10), st.floats(0.01, 1e4), st.floats(0.01, 1e4), st.floats(0.1, 50))
@settings(max_examples=60, deadline=None)
def test_increasing_k2_never_unsatisfies(k1, k2a, k2b, k3):
    net = five_node_network()
    part = five_node_partitions(net)["mlpiac"]
    lo, hi = sorted((k2a, k2b))
    a = check_gain_condition(ControllerGains(k1, lo, k3, "mlpiac"), net, part)
    b = check_gain_condition(ControllerGains(k1, hi, k3, "mlpiac"), net, part)
    assert not (a.satisfied and not b.satisfied)


# -- equilibrium ---------------------------------------------------------------------------

@pytest.mark.parametrize("variant", ["gbpiac", "dpiac", "mlpiac"])
def test_analytic_equilibrium_has_zero_residuals(five, variant):
    net, parts = five
    g = ControllerGains(variant=variant, **SECTION_GAINS)
    P = net.injection.copy()
    P[2] -= 0.3
    eq = closed_loop_equilibrium(net, parts[variant], g, P)
    res = verify_equilibrium(eq.state(), net, parts[variant], g, p_s=eq.p_s)
    assert max(res.values()) < 1e-12


def test_consensus_residual_fault_injection(five):
    net, parts = five
    g = ControllerGains(variant="mlpiac", **SECTION_GAINS)
    state = SystemState(0.0, np.zeros(5), np.zeros(4), np.array([-0.1, -0.2]), np.array([0.1, 0.2]))
    from piac.controllers import build_plan

    plan = build_plan(g, net, parts["mlpiac"])
    res = verify_equilibrium(state, net, parts["mlpiac"], g, p_s=-0.48)
    mc = plan.alpha_area * state.xi
    assert res["frequency"] == 0.0
    assert res["consensus"] == pytest.approx(abs(mc[0] - mc[1]), rel=1e-14)
    assert res["imbalance"] == pytest.approx(0.0, abs=1e-15)


def test_ieee39_mlpiac_settled_state(ieee39, ieee39_runs):
    net, parts, _ = ieee39
    traj = ieee39_runs["mlpiac"]
    g = traj.gains
    res = verify_equilibrium(traj.final_state(), net, parts["mlpiac"], g, p_s=traj.p_s[-1])
    for key, value in res.items():
        assert value < 1e-4, (key, value)


def test_ieee39_mlpiac_settles_on_longer_horizon(ieee39):
    net, parts, spec = ieee39
    g = ControllerGains(variant="mlpiac", **SECTION_GAINS)
    traj = integrate(net, parts["mlpiac"], g, spec.disturbances, t_end=200.0, dt=1e-2, record_every=100)
    res = verify_equilibrium(traj.final_state(), net, parts["mlpiac"], g, p_s=traj.p_s[-1])
    assert max(res.values()) < 1e-4, res


# -- Lyapunov ------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def five_eq():
    net = five_node_network()
    part = single_area(net)
    g = ControllerGains(variant="gbpiac", **SECTION_GAINS)
    P = net.injection.copy()
    P[2] -= 0.3
    return net, part, g, closed_loop_equilibrium(net, part, g, P)


def test_lyapunov_zero_at_equilibrium(five_eq):
    net, _, g, eq = five_eq
    assert abs(lyapunov_V0_V1(eq.state(), net, eq, g)) < 1e-14


def test_lyapunov_positive_nearby(five_eq):
    net, _, g, eq = five_eq
    rng = np.random.default_rng(3)
    for _ in range(200):
        s = eq.state()
        dirs = [rng.normal(size=x.shape) for x in (s.phi, s.omega, s.eta, s.xi)]
        norm = np.sqrt(sum(np.sum(d ** 2) for d in dirs))
        r = 1e-3 * rng.random() ** 0.25 + 1e-6
        d = [r * x / norm for x in dirs]
        pert = SystemState(0.0, s.phi + d[0], s.omega + d[1], s.eta + d[2], s.xi + d[3])
        assert lyapunov_V0_V1(pert, net, eq, g) > 0


def test_lyapunov_requires_equilibrium(five_eq):
    net, _, g, eq = five_eq
    with pytest.raises(ValueError):
        lyapunov_V0_V1(eq.state(), net, None, g)


def test_lyapunov_decreases_on_five_node_run(five_eq):
    net, part, g, eq = five_eq
    traj = integrate(net, part, g, [Disturbance(0.0, 3, -0.3)], t_end=40.0, dt=1e-2)
    V = lyapunov_V0_V1(traj, net, eq, g)
    assert V[0] > 0.01 and V[-1] < 1e-6 * V[0]
    assert np.diff(V).max() <= 1e-6 * V[0]


# -- metrics ---------------------------------------------------------------------------------

def test_gbpiac_spread_is_zero(five):
    net, parts = five
    traj = integrate(net, parts["gbpiac"], ControllerGains(variant="gbpiac", **SECTION_GAINS),
                     [Disturbance(1.0, 3, -0.3)], t_end=10.0, dt=1e-2)
    spread, settle = consensus_metrics(traj)
    assert np.all(spread == 0.0) and settle == 0.0


def test_symmetric_areas_stay_in_consensus():
    nodes = (Node(1, M, 2.0, 1.0, 0.2, 0.5), Node(2, F, 0.0, 1.0, -0.2, 0.5),
             Node(3, M, 2.0, 1.0, 0.2, 0.5), Node(4, F, 0.0, 1.0, -0.2, 0.5))
    net = PowerNetwork(nodes, (Edge(1, 2, 1.0), Edge(2, 3, 1.0), Edge(3, 4, 1.0), Edge(4, 1, 1.0)))
    part = Partition({1: 1, 2: 1, 3: 2, 4: 2}, {(1, 2): 1.0})
    g = ControllerGains(variant="mlpiac", **SECTION_GAINS)
    traj = integrate(net, part, g, [Disturbance(1.0, 2, -0.1), Disturbance(1.0, 4, -0.1)], t_end=20.0, dt=1e-2)
    spread, settle = consensus_metrics(traj, part)
    assert spread.max() < 1e-12 and settle == 0.0


def test_settle_time_never_reached(five):
    net, parts = five
    traj = integrate(net, parts["dpiac"], ControllerGains(variant="dpiac", **SECTION_GAINS),
                     [Disturbance(1.0, 3, -0.3)], t_end=3.0, dt=1e-2)
    _, settle = consensus_metrics(traj, eps=1e-9)
    assert settle == float("inf")


def _const_traj(net, u, T):
    t = np.linspace(0.0, T, 11)
    n = t.size
    U = np.tile(np.asarray(u, dtype=float), (n, 1))
    z = np.zeros((n, 1))
    return Trajectory(net, single_area(net), ControllerGains(1, 1, 1), t, np.zeros((n, net.n)), np.zeros_like(U),
                      z, z, U, z, np.zeros(n), np.zeros(n))


def test_control_cost_examples(five):
    net, _ = five
    assert control_cost(_const_traj(net, np.zeros(4), 3.0)) == 0.0
    u = np.array([0.1, -0.2, 0.3, 0.05])
    assert control_cost(_const_traj(net, u, 3.0)) == pytest.approx(3.0 * np.sum(0.5 * net.price * u ** 2), rel=1e-14)


def test_mlpiac_cost_not_above_dpiac(ieee39_runs):
    c_m, c_d = control_cost(ieee39_runs["mlpiac"]), control_cost(ieee39_runs["dpiac"])
    print(f"control cost: gbpiac {control_cost(ieee39_runs['gbpiac']):.4f} dpiac {c_d:.4f} mlpiac {c_m:.4f}")
    assert c_m <= c_d


def test_equilibrium_dataclass_state_copies(five_eq):
    _, _, _, eq = five_eq
    s = eq.state()
    s.phi[0] = 99.0
    assert eq.phi[0] != 99.0 and isinstance(eq, Equilibrium)


def test_laplacian_of_partition_feeds_decomposition(five):
    net, parts = five
    d = decompose_partition(net, parts["mlpiac"])
    L = comm_laplacian(parts["mlpiac"])
    assert d.eigenvalues.size == L.shape[0] == 2
