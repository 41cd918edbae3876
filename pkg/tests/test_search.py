import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from distbeam import (
    TWO_PI,
    ChannelRealization,
    DecisionMapViolation,
    FeedbackBit,
    PerturbationSpec,
    PowerConfig,
    StopRule,
    epsilon_region_contains,
    generate_channel,
    init_state,
    magnitude,
    one_bit_step,
    optimal_magnitude,
    plug_decision_map,
    run_trajectory,
    sample_perturbation,
    trajectory_to_csv,
)

POWER = PowerConfig()


def two_element(delta_theta):
    """Channel a=[1,1] with theta gap delta_theta has magnitude 2|cos(gap/2)|."""
    return ChannelRealization(a=[1.0, 1.0], phi=[0.0, 0.0]), np.array([0.0, delta_theta])


def test_init_zero_mode_uses_channel_phases():
    ch = ChannelRealization(a=[1.0, 1.0], phi=[0.3, 1.2])
    state = init_state(ch, "zero", POWER)
    assert np.array_equal(state.theta, np.array([0.3, 1.2]))
    assert state.step_index == 0
    assert state.current_mag == magnitude(ch, ch.phi, 1.0)


def test_init_origin_is_zero_beamforming_phase():
    ch = generate_channel(5, np.random.default_rng(2))
    a = init_state(ch, "origin", POWER)
    b = init_state(ch, "zero", POWER)
    assert np.array_equal(a.theta, b.theta)


def test_init_explicit_vector():
    ch = ChannelRealization(a=[1.0, 1.0, 1.0], phi=[0.5, 1.5, 2.5])
    state = init_state(ch, np.zeros(3), POWER)
    assert np.array_equal(state.theta, np.zeros(3))
    assert state.current_mag == pytest.approx(3.0)
    with pytest.raises(ValueError, match="length"):
        init_state(ch, np.zeros(2), POWER)
    with pytest.raises(ValueError, match="init mode"):
        init_state(ch, "sideways", POWER)


def test_init_uniform_is_seeded():
    ch = generate_channel(4, np.random.default_rng(0))
    s1 = init_state(ch, "uniform", POWER, np.random.default_rng(7))
    s2 = init_state(ch, "uniform", POWER, np.random.default_rng(7))
    assert np.array_equal(s1.theta, s2.theta)
    assert np.all(s1.theta >= 0) and np.all(s1.theta < TWO_PI)


@pytest.mark.parametrize("delta0", [math.pi / 30, math.pi / 90])
def test_perturbation_support(delta0):
    spec = PerturbationSpec(delta0=delta0)
    draws = sample_perturbation(spec, 1000, 0, np.random.default_rng(1))
    assert draws.shape == (1000,)
    assert np.all(np.abs(draws) <= delta0)


def test_perturbation_mean_is_zero():
    spec = PerturbationSpec(delta0=0.5)
    rng = np.random.default_rng(3)
    draws = np.concatenate([sample_perturbation(spec, 1000, t, rng) for t in range(100)])
    se = 0.5 / math.sqrt(3) / math.sqrt(draws.size)
    assert abs(draws.mean()) < 3 * se


def test_perturbation_schedule():
    spec = PerturbationSpec(delta0=0.1, schedule=(0.5, 0.25))
    assert spec.delta0_at(0) == 0.5
    assert spec.delta0_at(1) == 0.25
    assert spec.delta0_at(2) == 0.1
    rng = np.random.default_rng(0)
    big = sample_perturbation(spec, 2000, 0, rng)
    late = sample_perturbation(spec, 2000, 5, rng)
    assert np.abs(big).max() > 0.25
    assert np.abs(late).max() <= 0.1


def test_perturbation_spec_validation():
    with pytest.raises(ValueError):
        PerturbationSpec(delta0=0.0)
    with pytest.raises(ValueError):
        PerturbationSpec(delta0=0.1, family="gaussian")
    with pytest.raises(ValueError):
        PerturbationSpec(delta0=0.1, schedule=(0.1, -0.1))


def test_step_keeps_only_strict_improvements():
    # near-antipodal two-element channel: closed form 2|cos(gap/2)|
    ch, theta = two_element(math.pi - 0.01)
    spec = PerturbationSpec(delta0=math.pi / 30)
    kept = 0
    for seed in range(20):
        state = init_state(ch, theta, POWER)
        new, bit, inc = one_bit_step(state, ch, spec, POWER, np.random.default_rng(seed))
        assert new.step_index == 1
        if bit is FeedbackBit.KEEP:
            kept += 1
            assert inc > 0
            assert new.current_mag > state.current_mag
            gap = float(np.diff(new.theta)[0])
            assert new.current_mag == pytest.approx(2 * abs(math.cos(gap / 2)), rel=1e-12)
        else:
            assert inc == 0.0
            assert new.theta is state.theta
            assert new.current_mag == state.current_mag
    assert 0 < kept < 20


def test_tie_breaks_to_discard():
    # single transmitter: every proposal has the same magnitude, so nothing is kept
    ch = ChannelRealization(a=[2.0], phi=[1.0])
    spec = PerturbationSpec(delta0=0.3)
    state = init_state(ch, "zero", POWER)
    for seed in range(5):
        new, bit, inc = one_bit_step(state, ch, spec, POWER, np.random.default_rng(seed))
        assert bit is FeedbackBit.DISCARD
        assert inc == 0.0
        assert new.theta is state.theta


def test_trajectory_monotone_and_telescoping():
    ch = generate_channel(8, np.random.default_rng(10))
    traj = run_trajectory(
        ch, PerturbationSpec(delta0=math.pi / 30), POWER, "uniform",
        StopRule.steps(400), seed=10,
    )
    curve = traj.magnitudes()
    assert np.all(np.diff(curve) >= 0)
    telescoped = traj.initial_mag + traj.increments.sum()
    assert abs(traj.final_mag - telescoped) <= 1e-9 * traj.final_mag
    # keep exactly when the magnitude moved
    assert np.array_equal(traj.bits, np.diff(curve) > 0)


def test_trajectory_is_deterministic():
    ch = generate_channel(6, np.random.default_rng(1))
    spec = PerturbationSpec(delta0=math.pi / 90)
    a = run_trajectory(ch, spec, POWER, "zero", StopRule.steps(200), seed=99)
    b = run_trajectory(ch, spec, POWER, "zero", StopRule.steps(200), seed=99)
    assert np.array_equal(a.mags, b.mags)
    assert np.array_equal(a.bits, b.bits)
    assert np.array_equal(a.thetas, b.thetas)
    assert np.array_equal(a.proposed_thetas, b.proposed_thetas)


def test_discard_leaves_theta_bit_identical():
    ch = generate_channel(5, np.random.default_rng(3))
    traj = run_trajectory(
        ch, PerturbationSpec(delta0=math.pi / 30), POWER, "uniform",
        StopRule.steps(300), seed=4,
    )
    thetas = np.vstack([traj.initial_theta, traj.thetas])
    for t in range(traj.n_steps):
        if not traj.bits[t]:
            assert np.array_equal(thetas[t + 1], thetas[t])
        else:
            assert np.array_equal(thetas[t + 1], traj.proposed_thetas[t])
            assert not np.array_equal(thetas[t + 1], thetas[t])


def test_zero_step_budget_keeps_initial_record_only():
    ch = generate_channel(3, np.random.default_rng(0))
    traj = run_trajectory(
        ch, PerturbationSpec(delta0=0.1), POWER, "zero", StopRule.steps(0), seed=0
    )
    assert traj.n_steps == 0
    assert traj.converged is None
    assert traj.magnitudes().shape == (1,)
    assert traj.final_mag == traj.initial_mag


def test_alpha_stop_terminates_each_seeded_run():
    spec = PerturbationSpec(delta0=math.pi / 90)
    rng = np.random.default_rng(123)
    for seed in range(20):
        ch = generate_channel(10, rng)
        traj = run_trajectory(
            ch, spec, POWER, "zero", StopRule.alpha_fraction(0.9, 4000), seed=seed,
            record_thetas=False,
        )
        assert traj.converged is True
        assert traj.final_mag >= 0.9 * optimal_magnitude(ch, 1.0)


def test_eps_stop_and_horizon_flag():
    ch = generate_channel(10, np.random.default_rng(42))
    spec = PerturbationSpec(delta0=math.pi / 90)
    eps = 0.1 * optimal_magnitude(ch, 1.0)
    traj = run_trajectory(
        ch, spec, POWER, "zero", StopRule.eps_region(eps, 4000), seed=0,
        record_thetas=False,
    )
    assert traj.converged is True
    assert epsilon_region_contains(ch, traj.final_theta, 1.0, eps)
    # starving the budget reports failure as a flag, not an exception
    short = run_trajectory(
        ch, spec, POWER, "zero", StopRule.eps_region(eps, 3), seed=0,
        record_thetas=False,
    )
    assert short.converged is False
    assert short.n_steps == 3


def test_threshold_met_at_initial_point_runs_zero_steps():
    ch = ChannelRealization(a=[1.0], phi=[0.4])
    traj = run_trajectory(
        ch, PerturbationSpec(delta0=0.1), POWER, "zero",
        StopRule.alpha_fraction(1.0, 100), seed=1,
    )
    assert traj.converged is True
    assert traj.n_steps == 0


def test_stop_rule_validation():
    with pytest.raises(ValueError):
        StopRule(max_steps=-1)
    with pytest.raises(ValueError):
        StopRule(max_steps=10, eps=1.0, alpha=0.5)
    with pytest.raises(ValueError):
        StopRule.alpha_fraction(1.5, 10)
    with pytest.raises(ValueError):
        StopRule.eps_region(0.0, 10)


def test_strict_greater_predicate_reproduces_one_bit_step():
    ch = generate_channel(6, np.random.default_rng(8))
    spec = PerturbationSpec(delta0=math.pi / 30)
    custom = plug_decision_map(lambda cur, prop: prop > cur)
    via_custom = run_trajectory(
        ch, spec, POWER, "zero", StopRule.steps(250), seed=17, step_fn=custom,
        record_thetas=False,
    )
    via_default = run_trajectory(
        ch, spec, POWER, "zero", StopRule.steps(250), seed=17, record_thetas=False,
    )
    assert np.array_equal(via_custom.mags, via_default.mags)
    assert np.array_equal(via_custom.bits, via_default.bits)


def test_greater_or_equal_predicate_is_monotone_safe():
    ch = ChannelRealization(a=[2.0], phi=[1.0])  # all proposals tie
    step = plug_decision_map(lambda cur, prop: prop >= cur)
    traj = run_trajectory(
        ch, PerturbationSpec(delta0=0.2), POWER, "zero", StopRule.steps(50),
        seed=0, step_fn=step,
    )
    assert np.all(traj.bits)
    assert np.all(np.diff(traj.magnitudes()) == 0)


def test_always_accept_violates_contract():
    ch = generate_channel(4, np.random.default_rng(5))
    step = plug_decision_map(lambda cur, prop: True)
    with pytest.raises(DecisionMapViolation, match="accepted a decrease"):
        run_trajectory(
            ch, PerturbationSpec(delta0=math.pi / 8), POWER, "uniform",
            StopRule.steps(200), seed=1, step_fn=step,
        )


def test_batched_uniform_draws_match_sequential():
    # the experiments engine pre-draws perturbations in chunks; the stream
    # must be identical to per-step draws
    r1 = np.random.default_rng(9)
    r2 = np.random.default_rng(9)
    batch = r1.uniform(-0.1, 0.1, (64, 7))
    seq = np.stack([r2.uniform(-0.1, 0.1, 7) for _ in range(64)])
    assert np.array_equal(batch, seq)


def test_step_records_view():
    ch = generate_channel(3, np.random.default_rng(21))
    traj = run_trajectory(
        ch, PerturbationSpec(delta0=0.2), POWER, "uniform", StopRule.steps(10), seed=2
    )
    records = list(traj.steps())
    assert [r.step_index for r in records] == list(range(1, 11))
    for r in records:
        assert r.bit in (FeedbackBit.KEEP, FeedbackBit.DISCARD)
        assert r.increment >= 0
        assert r.proposed_theta.shape == (3,)


def test_first_passage_time():
    ch = generate_channel(5, np.random.default_rng(6))
    traj = run_trajectory(
        ch, PerturbationSpec(delta0=math.pi / 30), POWER, "zero",
        StopRule.steps(800), seed=3, record_thetas=False,
    )
    thr = 0.8 * optimal_magnitude(ch, 1.0)
    t = traj.first_passage_time(thr)
    curve = traj.magnitudes()
    assert curve[t] >= thr
    assert np.all(curve[:t] < thr)
    assert traj.first_passage_time(2 * optimal_magnitude(ch, 1.0)) is None


def test_convergence_in_probability_fraction_is_monotone():
    spec = PerturbationSpec(delta0=math.pi / 30)
    rng = np.random.default_rng(77)
    horizon = 1200
    inside = np.zeros((30, horizon + 1), dtype=bool)
    for k in range(30):
        ch = generate_channel(5, rng)
        eps = 0.1 * optimal_magnitude(ch, 1.0)
        traj = run_trajectory(
            ch, spec, POWER, "uniform", StopRule.steps(horizon), seed=k,
            record_thetas=False,
        )
        inside[k] = traj.magnitudes() > optimal_magnitude(ch, 1.0) - eps
    fraction = inside.mean(axis=0)
    assert np.all(np.diff(fraction) >= 0)
    assert fraction[-1] == 1.0


def test_trajectory_csv_format():
    ch = ChannelRealization(a=[1.0, 0.5], phi=[0.25, 1.5])
    traj = run_trajectory(
        ch, PerturbationSpec(delta0=math.pi / 30), POWER, "zero",
        StopRule.steps(5), seed=11,
    )
    buf = io.StringIO()
    trajectory_to_csv(traj, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0].startswith("# gains=")
    assert lines[1] == f"# delta0={math.pi / 30!r}"
    assert lines[2] == "# P=1.0"
    assert lines[3] == "# seed=11"
    assert lines[4] == "step,bit,mag,increment"
    assert lines[5].startswith("0,,")
    assert len(lines) == 5 + 1 + traj.n_steps
    step, bit, mag, inc = lines[6].split(",")
    assert step == "1" and bit in ("keep", "discard")
    assert float(mag) == traj.mags[0]
    assert float(inc) == traj.increments[0]


def test_noisy_step_compares_against_stored_estimate():
    # with noise on, the comparison baseline is the estimate stored at the
    # last accepted step, and trajectories stay seeded-reproducible
    ch = generate_channel(4, np.random.default_rng(14))
    power = PowerConfig(P=1.0, sigma2=0.05, averaging_slots=4)
    spec = PerturbationSpec(delta0=math.pi / 30)
    a = run_trajectory(ch, spec, power, "zero", StopRule.steps(150), seed=5)
    b = run_trajectory(ch, spec, power, "zero", StopRule.steps(150), seed=5)
    assert np.array_equal(a.mags, b.mags)
    kept = a.mags[a.bits]
    # accepted estimates strictly increase (each beat the stored baseline)
    assert np.all(np.diff(np.concatenate(([a.initial_mag], kept))) > 0)


@given(st.integers(min_value=0, max_value=10_000), st.integers(min_value=2, max_value=8))
@settings(max_examples=25, deadline=None)
def test_trajectory_invariants_hold_for_any_seed(seed, n_s):
    ch = generate_channel(n_s, np.random.default_rng(seed + 1))
    traj = run_trajectory(
        ch, PerturbationSpec(delta0=math.pi / 30), POWER, "uniform",
        StopRule.steps(60), seed=seed, record_thetas=False,
    )
    curve = traj.magnitudes()
    assert np.all(np.diff(curve) >= 0)
    assert np.all(traj.increments >= 0)
    assert np.all(curve <= optimal_magnitude(ch, 1.0) * (1 + 1e-12))
    assert abs(traj.final_mag - (traj.initial_mag + traj.increments.sum())) <= max(
        1e-9 * traj.final_mag, 1e-15
    )
