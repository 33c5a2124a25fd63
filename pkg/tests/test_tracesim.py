"""Trace parsing, contact statistics, policy replay against the independent
step oracle, trace-driven threshold search, corpus generation, and the
population simulator."""
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from agectl import (
    MASK_POLICY,
    ContactTrace,
    LearningConfig,
    Policy,
    SystemParams,
    TraceFormatError,
    UserAssignment,
    UtilityFunction,
    best_trace_threshold,
    comparison_table,
    consecutive_stats,
    estimate_p,
    expected_reward_threshold,
    generate_corpus,
    iid_trace,
    parse_trace_text,
    simulate_policy,
    simulate_population,
    trace_env,
)
from agectl.tracesim import dump_traces, replayed_average_reward

from conftest import make_rng, reference_replay, threshold_action


def linear_params(max_age=12, p=0.54, **kw):
    return SystemParams(
        contact_prob=p, max_age=max_age, utility=UtilityFunction.linear(max_age), **kw
    )


class TestParsing:
    def test_basic_line(self):
        traces = parse_trace_text("shiftA 10110\n")
        assert len(traces) == 1
        assert traces[0].shift_id == "shiftA"
        assert traces[0].slots == (1, 0, 1, 1, 0)
        assert traces[0].mask is None

    def test_mask_column(self):
        (trace,) = parse_trace_text("shiftB 10110 00100\n")
        assert trace.mask == (0, 0, 1, 0, 0)

    def test_comments_and_blanks_skipped(self):
        traces = parse_trace_text("# header\n\nshiftA 101\nshiftB 011\n")
        assert [t.shift_id for t in traces] == ["shiftA", "shiftB"]

    def test_invalid_character_reports_line(self):
        with pytest.raises(TraceFormatError, match="line 3") as err:
            parse_trace_text("a 101\nb 111\nc 10x10\n")
        assert err.value.line_no == 3

    def test_mask_length_mismatch(self):
        with pytest.raises(TraceFormatError, match="mask length"):
            parse_trace_text("a 101 01\n")

    def test_empty_trace_rejected(self):
        with pytest.raises(ValueError):
            ContactTrace(shift_id="x", slots=())

    def test_dump_roundtrip(self):
        text = "a 10110 00100\nb 111\n"
        assert dump_traces(parse_trace_text(text)) == text


class TestStatistics:
    def test_estimate_p(self):
        assert estimate_p(ContactTrace("x", (1, 0, 1, 1, 0))) == pytest.approx(0.6)
        assert estimate_p(ContactTrace("x", (0, 0, 0))) == 0.0

    def test_alternating_conditionals(self):
        stats = consecutive_stats(ContactTrace("x", (0, 1, 0, 1, 0, 1)))
        assert stats.no_contact_after_no_contact == 0.0
        assert stats.no_contact_after_contact == 1.0

    def test_absent_conditional(self):
        stats = consecutive_stats(ContactTrace("x", (0, 0, 0, 0, 0)))
        assert stats.no_contact_after_no_contact == 1.0
        assert stats.no_contact_after_contact is None

    def test_iid_trace_is_uncorrelated(self):
        trace = iid_trace(0.5, 10**5, seed=99)
        stats = consecutive_stats(trace)
        assert stats.no_contact_after_no_contact == pytest.approx(0.5, abs=0.02)
        assert stats.no_contact_after_contact == pytest.approx(0.5, abs=0.02)

    @given(st.lists(st.sampled_from([0, 1]), min_size=1, max_size=50))
    def test_estimates_in_unit_interval(self, bits):
        trace = ContactTrace("h", tuple(bits))
        assert 0.0 <= estimate_p(trace) <= 1.0
        stats = consecutive_stats(trace)
        for value in (stats.no_contact_after_no_contact, stats.no_contact_after_contact):
            assert value is None or 0.0 <= value <= 1.0


class TestSimulatePolicy:
    def test_hand_stepped_example(self):
        # trace 101, linear M=3, free updates, threshold 1: rewards 2, 2, 1
        params = linear_params(max_age=3, p=0.5)
        result = simulate_policy(ContactTrace("x", (1, 0, 1)), params, Policy.from_thresholds(1, None, 3))
        assert result.total_reward == pytest.approx(5.0)
        assert result.update_slots == (1, 3)
        assert result.updates == 2

    def test_always_inactive_from_saturated_age(self):
        params = linear_params()
        pol = Policy.from_thresholds(13, None, 12)
        result = simulate_policy(iid_trace(0.54, 500, seed=3), params, pol, start_age=12)
        assert result.total_reward == 0.0
        assert result.updates == 0

    def test_agrees_with_reference_oracle(self):
        rng = make_rng(71)
        for _ in range(25):
            params = linear_params(
                max_age=int(rng.integers(3, 10)),
                p=float(rng.uniform(0.2, 0.8)),
                scan_cost=float(rng.uniform(0, 2)),
                wifi_price=2.0,
                price_3g=7.0,
                bonus=float(rng.uniform(0, 2)),
            )
            s3 = int(rng.integers(1, params.max_age + 2))
            s = int(rng.integers(1, s3 + 1))
            slots = tuple(int(b) for b in rng.random(400) < 0.5)
            pol = Policy.from_thresholds(min(s, params.max_age + 1), s3, params.max_age)
            result = simulate_policy(ContactTrace("r", slots), params, pol)
            oracle = reference_replay(slots, params, threshold_action(s, s3))
            assert result.total_reward == pytest.approx(sum(oracle), abs=1e-9)

    def test_conservation_invariants(self):
        params = linear_params(scan_cost=0.7, wifi_price=3.0, price_3g=9.0, bonus=1.0)
        pol = Policy.from_thresholds(2, 6, 12)
        trace = iid_trace(0.4, 2000, seed=4)
        result = simulate_policy(trace, params, pol)
        assert result.updates == result.updates_wifi + result.updates_3g
        assert result.updates == len(result.update_slots)
        assert result.fees_paid == pytest.approx(
            result.updates_wifi * (3.0 - 1.0) + result.updates_3g * (9.0 - 1.0)
        )
        # energy = scan cost times active slots, recounted from the age path
        from agectl import next_age

        age, active = 1, 0
        action_at = threshold_action(2, 6)
        for e in trace.slots:
            a = action_at(age)
            active += a != 0
            age = next_age(age, a, e, params.max_age)
        assert result.energy_spent == pytest.approx(0.7 * active)
        assert result.average_reward == pytest.approx(result.total_reward / result.slots)

    def test_replay_is_deterministic(self):
        params = linear_params()
        trace = iid_trace(0.5, 1000, seed=5)
        pol = Policy.from_thresholds(3, None, 12)
        a = simulate_policy(trace, params, pol)
        b = simulate_policy(trace, params, pol)
        assert a == b

    def test_mask_policy(self):
        params = linear_params(max_age=3, p=0.5, scan_cost=0.25)
        trace = ContactTrace("m", (1, 1, 1, 0), mask=(0, 1, 0, 1))
        result = simulate_policy(trace, params, MASK_POLICY)
        # slots 2 and 4 active; update only at slot 2 (slot 4 has no contact)
        assert result.update_slots == (2,)
        assert result.energy_spent == pytest.approx(0.5)

    def test_mask_policy_needs_mask(self):
        with pytest.raises(ValueError, match="mask"):
            simulate_policy(ContactTrace("x", (1, 0)), linear_params(max_age=2), MASK_POLICY)

    def test_ergodic_agreement_smoke(self):
        # acceptance covers the full grid; one cell here as a regression probe
        params = linear_params(scan_cost=0.99)
        trace = iid_trace(0.54, 200_000, seed=6)
        result = simulate_policy(trace, params, Policy.from_thresholds(4, None, 12))
        rewards = np.asarray(
            reference_replay(trace.slots, params, threshold_action(4))
        )
        se = rewards.std() / np.sqrt(len(rewards))
        assert abs(result.average_reward - expected_reward_threshold(params, 4)) < 3 * se


class TestBestTraceThreshold:
    def test_free_updates_want_threshold_one(self):
        params = linear_params(max_age=6, p=0.5)
        trace = ContactTrace("d", (1, 0, 0, 1, 0, 0, 1, 0, 0, 1, 0, 0))
        s, reward = best_trace_threshold(trace, params, replications=4)
        assert s == 1
        assert reward > 0

    def test_tracks_model_on_iid_traces(self):
        rng = make_rng(72)
        params = linear_params(scan_cost=0.2 * 11)  # b = 0.2
        close = 0
        n = 20
        from agectl import optimal_threshold

        s_model = optimal_threshold(params).s_star
        for i in range(n):
            trace = iid_trace(0.54, 600, seed=int(rng.integers(1, 2**31)))
            s_trace, _ = best_trace_threshold(trace, params, replications=8)
            close += abs(s_trace - s_model) <= 2
        assert close >= 0.6 * n  # within 2 in at least 60% of shifts

    def test_rotation_replications_change_nothing_on_constant_trace(self):
        params = linear_params(max_age=4, p=0.5)
        trace = ContactTrace("c", (1,) * 40)
        s, reward = best_trace_threshold(trace, params, replications=5)
        assert s == 1
        assert reward == pytest.approx(
            replayed_average_reward(trace, params, Policy.from_thresholds(1, None, 4), 1)
        )


class TestCorpusGenerator:
    def test_median_p_calibration(self):
        corpus = generate_corpus(200, seed=7)
        med = float(np.median([estimate_p(t) for t in corpus]))
        assert abs(med - 0.53) <= 0.02

    def test_shift_shapes(self):
        corpus = generate_corpus(30, seed=8)
        for trace in corpus:
            assert trace.mask is not None
            assert 4 * 8 <= len(trace) <= 10 * 16
            assert sum(trace.mask) >= 4  # one terminal visit per run
            # terminal slots are contact-rich
            term = [s for s, m in zip(trace.slots, trace.mask) if m]
            assert np.mean(term) > 0.6

    def test_seeded_reproducibility(self):
        a = generate_corpus(10, seed=9)
        b = generate_corpus(10, seed=9)
        assert a == b


class TestPopulation:
    def test_identical_users_stay_synchronized(self):
        params = linear_params(max_age=6, p=0.5)
        trace = iid_trace(0.5, 300, seed=10, shift_id="bus")
        users = [UserAssignment(trace=trace, phase=0), UserAssignment(trace=trace, phase=0)]
        result = simulate_population(users, params, rounds=5, round_slots=40, record_ages=True)
        assert np.array_equal(result.age_history[0], result.age_history[1])
        assert result.users[0] == result.users[1]

    def test_single_user_rate_matches_chain(self):
        params = linear_params(scan_cost=0.99)
        trace = iid_trace(0.54, 120_000, seed=11)
        users = [UserAssignment(trace=trace)]
        result = simulate_population(users, params, rounds=1, round_slots=len(trace))
        from agectl import message_rate

        expected = message_rate(params, 1)
        observed = result.rounds[0].rate
        assert observed == pytest.approx(expected, rel=0.05)

    def test_controller_closes_the_loop(self):
        params = SystemParams(
            contact_prob=0.54, max_age=30, utility=UtilityFunction.linear(30),
            scan_cost=0.4, wifi_price=40.0,
        )
        rng = make_rng(73)
        traces = [iid_trace(0.54, 5000, seed=int(rng.integers(1, 2**31))) for _ in range(4)]
        users = [
            UserAssignment(trace=traces[i % 4], phase=137 * i) for i in range(20)
        ]
        controller = LearningConfig(
            max_bonus=40.0, target_rate=11.0, round_slots=100,
            learning_rate=1.0, initial_bonus=40.0, max_rounds=60,
        )
        result = simulate_population(users, params, rounds=60, round_slots=100, controller=controller)
        tail = [r.rate for r in result.rounds[-20:]]
        assert np.mean(tail) <= 11.0 + 0.75
        assert result.rounds[-1].bonus >= 35.0  # full sponsorship regime

    def test_trace_env_interface(self):
        params = linear_params(scan_cost=0.99)
        trace = iid_trace(0.54, 2000, seed=12)
        env = trace_env([UserAssignment(trace=trace)], params, round_slots=50)
        served = env(0.0)
        assert 0 <= served <= 50


class TestComparisonTable:
    def test_columns_and_model_consistency(self):
        params = linear_params(scan_cost=0.2 * 11)
        corpus = generate_corpus(6, seed=13)
        rows = comparison_table(corpus, params, replications=4)
        assert len(rows) == 6
        for row in rows:
            shift_id, p_hat, s_trace, s_model, r_trace, r_model, r_policy = row
            assert 0.0 <= p_hat <= 1.0
            assert 1 <= s_trace <= 13 and 1 <= s_model <= 13
            assert r_trace >= r_policy - 1e-9  # trace optimum dominates by construction
