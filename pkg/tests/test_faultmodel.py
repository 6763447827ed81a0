import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from healsim.faultmodel import (
    CostWeights,
    FaultPlan,
    PairRecord,
    PairState,
    RecoveryModel,
    SCENARIO_STREAMS,
    STREAMS,
    Scenario,
    classify_scenario,
    cost_components,
    pair_state_at,
    relative_costs,
    scenario_frequencies,
    tolerance_is_costless,
    total_cost,
)

from oracles import brute_force_class_counts, oracle_stream_ratios, random_record


# ------------------------------------------------------------ validation --


def test_record_validation_rejects_bad_inputs():
    with pytest.raises(ValueError):
        PairRecord(runtime=100, threshold=0)
    with pytest.raises(ValueError):
        PairRecord(runtime=100, threshold=101)
    with pytest.raises(ValueError):
        PairRecord(runtime=100, threshold=10, target_fault=101)
    with pytest.raises(ValueError):
        PairRecord(runtime=100, threshold=10, detection=5)  # before threshold
    with pytest.raises(ValueError):
        PairRecord(runtime=100, threshold=10, monitor_fault=50, detection=50)


# -------------------------------------------------------------- classify --


def test_classify_examples():
    assert classify_scenario(PairRecord(3200, 100)) is Scenario.S1
    assert (
        classify_scenario(
            PairRecord(3200, 100, monitor_fault=2264, target_fault=1332, detection=1500)
        )
        is Scenario.S5_2
    )
    assert (
        classify_scenario(PairRecord(3200, 100, monitor_fault=1600, target_fault=1600))
        is Scenario.S6
    )


def test_classify_covers_every_shape():
    assert classify_scenario(PairRecord(100, 5, target_fault=50)) is Scenario.S2
    assert classify_scenario(PairRecord(100, 5, monitor_fault=50)) is Scenario.S3
    assert (
        classify_scenario(PairRecord(100, 5, monitor_fault=40, target_fault=60))
        is Scenario.S4
    )
    # detection at or before the target fault: early-detection sub-case
    assert (
        classify_scenario(
            PairRecord(100, 5, monitor_fault=60, target_fault=40, detection=40)
        )
        is Scenario.S5_1
    )
    assert (
        classify_scenario(
            PairRecord(100, 5, monitor_fault=60, target_fault=40, detection=30)
        )
        is Scenario.S5_1
    )
    # late or missing detection saturates into the lagging sub-case
    assert (
        classify_scenario(
            PairRecord(100, 5, monitor_fault=60, target_fault=40, detection=50)
        )
        is Scenario.S5_2
    )
    assert (
        classify_scenario(PairRecord(100, 5, monitor_fault=60, target_fault=40))
        is Scenario.S5_2
    )


# --------------------------------------------------------- pair_state_at --


def test_state_examples():
    healthy = PairRecord(3200, 100)
    assert pair_state_at(healthy, 100) is PairState.TN
    rec = PairRecord(3200, 100, target_fault=1600, detection=1700)
    assert pair_state_at(rec, 1650) is PairState.FN
    assert pair_state_at(rec, 2000) is PairState.TP


def test_state_windows_are_half_open():
    rec = PairRecord(100, 5, target_fault=50, detection=60)
    assert pair_state_at(rec, 50) is PairState.TN  # fault takes effect at 51
    assert pair_state_at(rec, 51) is PairState.FN
    assert pair_state_at(rec, 60) is PairState.FN  # detection takes effect at 61
    assert pair_state_at(rec, 61) is PairState.TP
    fp = PairRecord(100, 5, detection=10)
    assert pair_state_at(fp, 10) is PairState.TN
    assert pair_state_at(fp, 11) is PairState.FP


def test_state_none_when_monitor_dead_and_target_healthy():
    rec = PairRecord(100, 5, monitor_fault=40)
    assert pair_state_at(rec, 41) is PairState.NONE
    rec2 = PairRecord(100, 5, monitor_fault=40, detection=20)
    assert pair_state_at(rec2, 30) is PairState.FP
    assert pair_state_at(rec2, 50) is PairState.NONE


# -------------------------------------------------------- relative_costs --


def test_cost_examples():
    earliest = PairRecord(3200, 100, detection=100)
    assert relative_costs(earliest)["S1-FP"] == 1.0

    late = PairRecord(3200, 100, target_fault=1600, detection=1700)
    assert relative_costs(late)["S2-FN"] == pytest.approx(0.0625, abs=1e-15)

    dead_monitor = PairRecord(3200, 100, monitor_fault=1000, target_fault=2000)
    assert relative_costs(dead_monitor)["S4-FN"] == 1.0

    lagging = PairRecord(3200, 100, monitor_fault=2264, target_fault=1332, detection=1500)
    costs = relative_costs(lagging)
    assert costs["S5.2-FN-lag"] == pytest.approx(168 / 932, abs=1e-15)
    assert costs["S5.2-FN-post"] == 1.0


def test_cost_zero_denominators_yield_zero():
    # target fault on the final epoch: empty FN window
    rec = PairRecord(100, 5, monitor_fault=40, target_fault=100)
    assert relative_costs(rec)["S4-FN"] == 0.0
    # threshold equal to the target fault: empty FP window
    rec = PairRecord(100, 50, target_fault=50, detection=50)
    costs = relative_costs(rec)
    assert costs["S2-FP"] == 0.0
    assert costs["S2-FN"] == 0.0  # detection exactly at the fault


def test_undetected_fault_costs_the_full_window():
    rec = PairRecord(3200, 100, target_fault=1600)
    assert relative_costs(rec)["S2-FN"] == 1.0
    rec = PairRecord(3200, 100, monitor_fault=2264, target_fault=1332)
    costs = relative_costs(rec)
    assert costs["S5.2-FN-lag"] == 1.0
    assert costs["S5.2-FN-post"] == 1.0


def test_streams_outside_scenario_are_zero():
    rng = random.Random(7)
    for _ in range(300):
        rec = random_record(rng)
        scenario = classify_scenario(rec)
        costs = relative_costs(rec)
        owned = set(SCENARIO_STREAMS[scenario])
        for stream in STREAMS:
            if stream not in owned:
                assert costs[stream] == 0.0


def test_costs_match_epoch_counting_oracle():
    rng = random.Random(2024)
    for _ in range(2000):
        rec = random_record(rng)
        closed = relative_costs(rec)
        counted = oracle_stream_ratios(rec)
        for stream in STREAMS:
            assert math.isclose(
                closed[stream], counted[stream], abs_tol=1e-12
            ), (rec, stream, closed[stream], counted[stream])
            assert 0.0 <= closed[stream] <= 1.0


# ------------------------------------------------------------ total_cost --


def test_total_cost_single_stream():
    rec = PairRecord(3200, 100, target_fault=1600, detection=1700)
    summary = total_cost([rec])
    assert summary.c_total == pytest.approx(0.0625)
    assert summary.c_fn == pytest.approx(0.0625)
    assert summary.c_fp == 0.0


def test_total_cost_empty_and_weighted():
    assert total_cost([]).c_total == 0.0
    half = PairRecord(200, 50, detection=125)  # S1-FP = 75/150 = 0.5
    weights = CostWeights(false_positive={Scenario.S1: 2.0})
    summary = total_cost([half, half], weights)
    assert summary.c_total == pytest.approx(2.0)
    assert summary.c_fp == pytest.approx(2.0)


def test_total_cost_is_additive():
    rng = random.Random(99)
    records = [random_record(rng) for _ in range(60)]
    left, right = records[:25], records[25:]
    whole = total_cost(records)
    parts = total_cost(left), total_cost(right)
    assert whole.c_total == pytest.approx(parts[0].c_total + parts[1].c_total)
    assert whole.c_fn == pytest.approx(parts[0].c_fn + parts[1].c_fn)
    assert whole.c_fp == pytest.approx(parts[0].c_fp + parts[1].c_fp)


def test_cost_components_reassemble_the_total():
    rng = random.Random(5)
    records = [random_record(rng) for _ in range(200)]
    c_fp, c_unit, c_rest = cost_components(records)
    summary = total_cost(records)
    assert c_fp == pytest.approx(summary.c_fp)
    assert c_unit + c_rest == pytest.approx(summary.c_fn)


def test_negative_weights_rejected():
    with pytest.raises(ValueError):
        CostWeights(false_negative={Scenario.S2: -0.1})


# ------------------------------------------------- scenario_frequencies --


def test_frequencies_examples():
    full = scenario_frequencies(3000, 1, 1500)
    assert sum(full.values()) == 8_997_000

    small = scenario_frequencies(10, 2, 2)
    assert small == {"S1": 30, "S2": 24, "S3": 24, "S4": 4, "S5": 4, "S6": 4}
    assert sum(small.values()) == 90

    empty = scenario_frequencies(5, 1, 0)
    assert empty["S1"] == 20
    assert sum(empty.values()) == 20


def test_frequencies_match_brute_force_enumeration():
    rng = random.Random(11)
    for n, m, k in [(10, 2, 2), (9, 3, 2), (12, 4, 3), (7, 1, 4), (6, 2, 3)]:
        nodes = list(range(n))
        rng.shuffle(nodes)
        fault_epoch: dict[int, int] = {}
        for batch in range(m):
            for node in nodes[batch * k : (batch + 1) * k]:
                fault_epoch[node] = 10 * (batch + 1)
        assert scenario_frequencies(n, m, k) == brute_force_class_counts(n, fault_epoch)


def test_frequencies_reject_bad_inputs():
    with pytest.raises(ValueError):
        scenario_frequencies(10, 3, 4)  # m*k > n
    with pytest.raises(ValueError):
        scenario_frequencies(1, 1, 0)
    with pytest.raises(TypeError):
        scenario_frequencies(10.0, 1, 2)


@given(
    n=st.integers(min_value=2, max_value=3000),
    m=st.sampled_from([1, 2, 4]),
    data=st.data(),
)
@settings(max_examples=200, deadline=None)
def test_frequencies_sum_identity(n, m, data):
    k = data.draw(st.integers(min_value=0, max_value=n // m))
    assert sum(scenario_frequencies(n, m, k).values()) == n * n - n


# ------------------------------------------------------------ fault plan --


def test_fault_plan_validation():
    plan = FaultPlan(n=6, batch_epochs=(10, 20), batches=((0, 1), (2, 3)))
    assert plan.m == 2 and plan.k == 2
    assert plan.fault_epoch_of(2) == 20
    assert plan.fault_epoch_of(5) is None
    with pytest.raises(ValueError):
        FaultPlan(n=6, batch_epochs=(20, 10), batches=((0,), (1,)))
    with pytest.raises(ValueError):
        FaultPlan(n=6, batch_epochs=(10, 20), batches=((0,), (0,)))
    with pytest.raises(ValueError):
        FaultPlan(n=6, batch_epochs=(10,), batches=((0,),), recoveries={0: 5})


# --------------------------------------------------- tolerance inequality --


def test_tolerance_examples():
    assert tolerance_is_costless(
        100, 50, RecoveryModel(correction_duration=30, recovery_epoch=150, propagation_time=20)
    )
    assert not tolerance_is_costless(
        100, 50, RecoveryModel(correction_duration=30, recovery_epoch=200, propagation_time=20)
    )
    assert not tolerance_is_costless(
        0, 0, RecoveryModel(correction_duration=0, recovery_epoch=0, propagation_time=0)
    )


# ------------------------------------------------------------ properties --


@st.composite
def records(draw):
    T = draw(st.integers(min_value=2, max_value=240))
    t = draw(st.integers(min_value=1, max_value=T))
    a = draw(st.one_of(st.none(), st.integers(min_value=1, max_value=T)))
    b = draw(st.one_of(st.none(), st.integers(min_value=1, max_value=T)))
    upper = T if a is None else a - 1
    if upper >= t and draw(st.booleans()):
        d = draw(st.integers(min_value=t, max_value=upper))
    else:
        d = None
    return PairRecord(T, t, monitor_fault=a, target_fault=b, detection=d)


@given(records())
@settings(max_examples=300, deadline=None)
def test_classification_is_total_and_costs_bounded(rec):
    scenario = classify_scenario(rec)
    assert scenario in Scenario
    costs = relative_costs(rec)
    assert set(costs) == set(STREAMS)
    for value in costs.values():
        assert 0.0 <= value <= 1.0


@given(records())
@settings(max_examples=200, deadline=None)
def test_every_epoch_has_exactly_one_state(rec):
    for tau in range(1, rec.runtime + 1):
        assert pair_state_at(rec, tau) in PairState
