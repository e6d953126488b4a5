import numpy as np
import pytest

from ics5gsim import ids
from ics5gsim.modbus import FlowKey

A = FlowKey("s", "p", 6, "req")
B = FlowKey("p", "s", 6, "resp")
C = FlowKey("h", "p", 3, "req")


def _periodic(flow, period, n, t0=0.0):
    return [(t0 + k * period, flow) for k in range(n)]


def test_constant_iat_bounds():
    model = ids.train_iat(ids.PacketTrace.synthetic(_periodic(A, 0.1, 200)))
    lo, hi, n = model.bounds[A]
    assert (lo, hi, n) == (pytest.approx(0.09), pytest.approx(0.11), 199)
    assert model.width(A) == pytest.approx(0.02)


def test_short_flows_excluded_with_warning(caplog):
    trace = ids.PacketTrace.synthetic(_periodic(A, 0.1, 200) + _periodic(C, 0.5, 20))
    with caplog.at_level("WARNING"):
        model = ids.train_iat(trace)
    assert A in model.bounds and C not in model.bounds
    assert "excluded" in caplog.text
    assert ids.detect_iat(model, ids.PacketTrace.synthetic(_periodic(C, 0.01, 50))) == []


def test_training_replay_raises_no_alerts():
    rng = np.random.default_rng(0)
    ev = [(float(t), A) for t in np.cumsum(rng.uniform(0.03, 0.05, 500))]
    ev += [(float(t), B) for t in np.cumsum(rng.uniform(0.09, 0.11, 300))]
    trace = ids.PacketTrace.synthetic(ev)
    assert ids.detect_iat(ids.train_iat(trace), trace) == []
    assert ids.detect_dtmc(ids.train_dtmc(trace), trace) == []


def test_iat_gap_and_burst():
    model = ids.train_iat(ids.PacketTrace.synthetic(_periodic(A, 0.1, 200)))
    gap = _periodic(A, 0.1, 10) + _periodic(A, 0.1, 10, t0=0.9 + 0.3)
    alerts = ids.detect_iat(model, ids.PacketTrace.synthetic(gap))
    assert [a.reason for a in alerts] == ["above_bound"]
    burst = _periodic(A, 0.1, 5) + [(0.41, A)]
    assert [a.reason for a in ids.detect_iat(model, ids.PacketTrace.synthetic(burst))] == ["below_bound"]


def test_cooldown_deduplicates_per_flow():
    model = ids.train_iat(ids.PacketTrace.synthetic(_periodic(A, 0.1, 200)))
    noisy = _periodic(A, 0.01, 300)  # every IAT is out of bounds for 3 s
    alerts = ids.detect_iat(model, ids.PacketTrace.synthetic(noisy))
    assert len(alerts) == 3
    assert all(b.t - a.t >= 1.0 for a, b in zip(alerts, alerts[1:]))


def test_wider_spread_never_narrows_bounds():
    rng = np.random.default_rng(3)
    base = 0.1 + rng.normal(0, 0.002, 400)
    for scale in (1.0, 2.0, 5.0):
        iat = 0.1 + (base - 0.1) * scale
        m = ids.train_iat(ids.PacketTrace.synthetic([(float(t), A) for t in np.cumsum(iat)]))
        w = m.width(A)
        if scale > 1.0:
            assert w >= prev
        prev = w


def test_dtmc_alternation():
    seq = [(0.1 * k, A if k % 2 == 0 else B) for k in range(100)]
    model = ids.train_dtmc(ids.PacketTrace.synthetic(seq))
    assert model.prob(A.msg_class, B.msg_class) == 1.0
    assert model.prob(B.msg_class, A.msg_class) == 1.0
    for row in model.probs.values():
        assert sum(row.values()) == pytest.approx(1.0, abs=1e-9)
    # an extra read request breaks the alternation
    test = seq[:10] + [(0.95, C)] + [(t + 1.0, f) for t, f in seq[10:20]]
    alerts = ids.detect_dtmc(model, ids.PacketTrace.synthetic(test))
    assert alerts and alerts[0].reason == "unseen_transition" and alerts[0].flow == C


def test_dtmc_rare_transition_threshold():
    model = ids.DtmcModel([A.msg_class, B.msg_class], {A.msg_class: {A.msg_class: 0.99995, B.msg_class: 5e-5},
                                                        B.msg_class: {A.msg_class: 1.0}}, p_min=1e-4)
    # a transition that occurred during training is never flagged
    assert model.threshold == 5e-5
    trace = ids.PacketTrace.synthetic([(0.0, A), (0.1, B), (0.2, A)])
    assert ids.detect_dtmc(model, trace) == []
    manual = ids.DtmcModel(model.states, {A.msg_class: {A.msg_class: 1.0}, B.msg_class: {A.msg_class: 1.0}}, 1e-4)
    assert [a.reason for a in ids.detect_dtmc(manual, trace)] == ["unseen_transition"]


def test_dtmc_requires_messages():
    with pytest.raises(ValueError):
        ids.train_dtmc(ids.PacketTrace.synthetic([(0.0, A)]))


def test_evaluate_accounting():
    windows = [(100.0 + 100 * k, 105.0 + 100 * k) for k in range(20)]
    alerts = [ids.Alert(a + 1.0, A, ids.IAT, "above_bound") for a, _ in windows]
    rep = ids.evaluate(alerts, windows)
    assert (rep.attacks_detected, rep.false_alert_count, rep.undetected) == (20, 0, 0)
    late = ids.evaluate([ids.Alert(105.0 + 4.0, A, ids.IAT, "x")], windows[:1])
    assert late.attacks_detected == 1 and late.latencies == [pytest.approx(9.0)]
    miss = ids.evaluate([ids.Alert(105.0 + 5.5, A, ids.IAT, "x"), ids.Alert(50.0, A, ids.IAT, "x")], windows[:1])
    assert (miss.attacks_detected, miss.false_alert_count) == (0, 2)
    assert miss.attacks_detected + miss.undetected == miss.attacks_total


def test_evaluate_rejects_overlapping_windows():
    with pytest.raises(ValueError):
        ids.evaluate([], [(0.0, 10.0), (12.0, 20.0)])


def test_alert_active_fraction():
    alerts = [ids.Alert(t, A, ids.IAT, "x") for t in (0.5, 0.7, 3.2, 9.99)]
    assert ids.alert_active_fraction(alerts, 10.0) == pytest.approx(0.3)


def test_histogram_modes():
    rng = np.random.default_rng(0)
    iats = np.concatenate([0.04 + rng.normal(0, 5e-4, 5000), 0.1 + rng.normal(0, 5e-4, 2000)])
    centres, counts = ids.iat_histogram(iats)
    assert ids.histogram_modes(centres, counts) == [pytest.approx(0.04), pytest.approx(0.10)]
