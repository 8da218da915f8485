"""Posterior updates, arm selection, and plan bookkeeping."""

import math

import numpy as np
import pytest

from relaysim import (
    DirectRouter,
    GaussianArmPosterior,
    RoutingPlan,
    ThompsonRouter,
    Ucb1Arm,
    Ucb1Router,
    ValidationError,
    maybe_update_plan,
    ts_select,
    ts_update,
    ucb1_select,
)
from relaysim.routing import TAU0_VARIANCE_FLOOR, tau0_from_variance


def test_conjugate_update_single_observation():
    arm = GaussianArmPosterior(0, mu=0.0, tau=1.0, tau0=1.0)
    out = ts_update(arm, [10.0])
    assert out.tau == 2.0
    assert out.mu == 5.0
    assert out.pulls == 1


def test_conjugate_update_symmetric_batch():
    arm = GaussianArmPosterior(0, mu=100.0, tau=4.0, tau0=2.0)
    out = ts_update(arm, [90.0, 110.0])
    # tau' = 4 + 2*2; mu' = (4*100 + 2*200) / 8, the batch mean equals the
    # prior mean so the location is unchanged
    assert out.tau == 8.0
    assert out.mu == 100.0


def test_conjugate_update_empty_batch_is_noop():
    arm = GaussianArmPosterior(3, mu=50.0, tau=2.0, tau0=1.0, pulls=7)
    assert ts_update(arm, []) is arm


def test_conjugate_update_uses_pre_update_precision():
    # folding one by one must equal the batch fold exactly
    arm = GaussianArmPosterior(0, mu=150.0, tau=0.5, tau0=0.125)
    rewards = [140.0, 155.0, 149.5]
    batch = ts_update(arm, rewards)
    seq = arm
    for r in rewards:
        seq = ts_update(seq, [r])
    assert batch.tau == pytest.approx(seq.tau, rel=1e-12)
    assert batch.mu == pytest.approx(seq.mu, rel=1e-12)
    assert batch.pulls == seq.pulls == 3


def test_conjugate_update_precision_grows_monotonically():
    arm = GaussianArmPosterior(0, mu=100.0, tau=1.0, tau0=0.04)
    rng = np.random.default_rng(0)
    for _ in range(50):
        prev = arm.tau
        arm = ts_update(arm, [float(rng.uniform(50, 200))])
        assert arm.tau == prev + arm.tau0


@pytest.mark.parametrize("bad", [0.0, -5.0, float("inf"), float("nan")])
def test_conjugate_update_rejects_bad_rewards(bad):
    arm = GaussianArmPosterior(0, mu=100.0, tau=1.0, tau0=1.0)
    with pytest.raises(ValidationError):
        ts_update(arm, [100.0, bad])


def test_posterior_validation():
    with pytest.raises(ValidationError):
        GaussianArmPosterior(0, mu=0.0, tau=0.0, tau0=1.0)
    with pytest.raises(ValidationError):
        GaussianArmPosterior(0, mu=0.0, tau=1.0, tau0=-1.0)


def test_posterior_concentrates_on_true_mean():
    true_mean = 150.0
    rng = np.random.default_rng(5)
    arm = GaussianArmPosterior(0, mu=300.0, tau=0.01, tau0=0.01)  # wrong prior
    arm = ts_update(arm, list(rng.normal(true_mean, 10.0, size=5000)))
    assert arm.mu == pytest.approx(true_mean, abs=1.0)
    assert arm.tau == pytest.approx(0.01 + 5000 * 0.01)


def test_tau0_variance_floor():
    assert tau0_from_variance(4.0) == 0.25
    assert tau0_from_variance(0.0) == 1.0 / TAU0_VARIANCE_FLOOR
    assert tau0_from_variance(1e-9) == 1.0 / TAU0_VARIANCE_FLOOR


def test_select_single_arm():
    arm = GaussianArmPosterior(4, mu=100.0, tau=1.0, tau0=1.0)
    rng = np.random.default_rng(0)
    assert ts_select([arm], rng) == 4


def test_select_prefers_clearly_lower_mean():
    # posterior-predictive stds ~1.0 vs a 900 ms gap: picking the slow arm is
    # a >600-sigma event
    fast = GaussianArmPosterior(1, mu=100.0, tau=2.0, tau0=2.0)
    slow = GaussianArmPosterior(2, mu=1000.0, tau=2.0, tau0=2.0)
    rng = np.random.default_rng(123)
    picks = [ts_select([fast, slow], rng) for _ in range(1000)]
    assert picks.count(1) == 1000


def test_select_symmetric_arms_split_evenly():
    a = GaussianArmPosterior(0, mu=100.0, tau=1.0, tau0=1.0)
    b = GaussianArmPosterior(1, mu=100.0, tau=1.0, tau0=1.0)
    rng = np.random.default_rng(7)
    picks = [ts_select([a, b], rng) for _ in range(10_000)]
    share = picks.count(0) / len(picks)
    assert 0.47 <= share <= 0.53


def test_select_invariant_under_common_shift():
    # identical rng state, every mean moved by the same constant: the sampled
    # ordering cannot change
    arms = [GaussianArmPosterior(i, mu=float(m), tau=1.0, tau0=0.5)
            for i, m in enumerate((120.0, 80.0, 150.0, 95.0))]
    arms = sorted(arms, key=lambda a: a.path_id)
    shifted = [GaussianArmPosterior(a.path_id, a.mu + 1e4, a.tau, a.tau0) for a in arms]
    for seed in range(50):
        r1 = np.random.default_rng(seed)
        r2 = np.random.default_rng(seed)
        assert ts_select(arms, r1) == ts_select(shifted, r2)


def test_select_validation():
    rng = np.random.default_rng(0)
    with pytest.raises(ValidationError):
        ts_select([], rng)
    a = GaussianArmPosterior(2, mu=1.0, tau=1.0, tau0=1.0)
    b = GaussianArmPosterior(1, mu=1.0, tau=1.0, tau0=1.0)
    with pytest.raises(ValidationError):
        ts_select([a, b], rng)


def test_ucb1_init_round_in_id_order():
    arms = [Ucb1Arm(0), Ucb1Arm(1), Ucb1Arm(2)]
    assert ucb1_select(arms) == 0
    arms[0].observe(100.0)
    assert ucb1_select(arms) == 1
    arms[1].observe(100.0)
    assert ucb1_select(arms) == 2


def test_ucb1_exploration_bonus_flips_to_undersampled_arm():
    a = Ucb1Arm(1, mean=100.0, n=10_000)
    b = Ucb1Arm(2, mean=105.0, n=1)
    c = 100.0
    assert ucb1_select([a, b], c=c) == 2
    # the indices behind that choice
    total = math.log(10_001)
    idx_a = 100.0 - c * math.sqrt(2.0 * total / 10_000)
    idx_b = 105.0 - c * math.sqrt(2.0 * total)
    assert idx_b < idx_a
    # with no exploration the better mean wins
    assert ucb1_select([a, b], c=0.0) == 1


def test_ucb1_tie_breaks_to_lowest_id():
    a = Ucb1Arm(3, mean=100.0, n=50)
    b = Ucb1Arm(7, mean=100.0, n=50)
    assert ucb1_select([a, b], c=5.0) == 3


def test_ucb1_observe_running_mean():
    arm = Ucb1Arm(0)
    for r in (10.0, 20.0, 30.0):
        arm.observe(r)
    assert arm.n == 3
    assert arm.mean == pytest.approx(20.0)
    with pytest.raises(ValidationError):
        arm.observe(-1.0)


def test_ucb1_select_validation():
    with pytest.raises(ValidationError):
        ucb1_select([])
    with pytest.raises(ValidationError):
        ucb1_select([Ucb1Arm(2), Ucb1Arm(1)])


def test_plan_update_gating():
    plan = RoutingPlan("e", "u", path_id=3, version=1, issued_at_ms=0.0)
    same, issued = maybe_update_plan(plan, 3, now_ms=100.0)
    assert not issued and same is plan
    new, issued = maybe_update_plan(plan, 5, now_ms=100.0)
    assert issued
    assert new.path_id == 5 and new.version == 2 and new.issued_at_ms == 100.0
    with pytest.raises(ValidationError):
        RoutingPlan("e", "u", path_id=0, version=0, issued_at_ms=0.0)


def test_direct_router_is_inert():
    r = DirectRouter(0)
    assert r.ready() and r.warm_order() == [] and r.needs_feedback is None
    r.observe(0, 100.0)
    assert r.select() == 0


def test_thompson_router_state():
    rng = np.random.default_rng(0)
    router = ThompsonRouter([(0, 100.0, 0.01), (2, 150.0, 0.01)], rng)
    assert router.ready() and router.warm_order() == []
    assert router.needs_feedback == "e2e"
    router.observe(2, 140.0)
    assert router.arm(2).pulls == 1
    assert router.select() in (0, 2)
    with pytest.raises(ValidationError):
        ThompsonRouter([], rng)
    with pytest.raises(ValidationError):
        ThompsonRouter([(0, 1.0, 1.0), (0, 2.0, 1.0)], rng)
    with pytest.raises(ValidationError):
        ThompsonRouter([(0, float("nan"), 1.0)], rng)


def test_ucb1_router_state():
    router = Ucb1Router([4, 1, 2], c=10.0)
    assert router.warm_order() == [1, 2, 4]
    assert not router.ready()
    assert router.uninitialized_ids() == [1, 2, 4]
    assert router.needs_feedback == "transmit"
    for pid in (1, 2, 4):
        router.observe(pid, 100.0 + pid)
    assert router.ready() and router.uninitialized_ids() == []
    assert router.select() in (1, 2, 4)
    with pytest.raises(ValidationError):
        Ucb1Router([])
    with pytest.raises(ValidationError):
        Ucb1Router([1], c=-1.0)


def test_thompson_converges_on_stationary_arms():
    # light version of the full convergence benchmark in the acceptance suite
    rng = np.random.default_rng(3)
    reward_rng = np.random.default_rng(30)
    means = (100.0, 150.0, 200.0)
    router = ThompsonRouter([(i, 150.0, 0.01) for i in range(3)], rng)
    picks = []
    for _ in range(3000):
        pid = router.select()
        picks.append(pid)
        router.observe(pid, max(float(reward_rng.normal(means[pid], 10.0)), 0.1))
    assert picks[-1000:].count(0) >= 800
